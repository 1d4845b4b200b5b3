//! WLS estimate of the 5-bus system from its six branch-flow readings.

use gridfdi::cases;
use gridfdi::estimator::{wls_estimate, MeasurementSet, WeightModel};
use gridfdi::grid::build_h_matrix;

fn main() -> gridfdi::Result<()> {
    let (net, meters) = cases::five_bus_grid()?;
    let h = build_h_matrix(&net, &meters)?;
    println!(
        "H ({} x {}, rank {}):{}",
        h.m(),
        h.n(),
        h.rank(),
        h.matrix()
    );

    let z = MeasurementSet::from_slice(&cases::FIVE_BUS_MEASUREMENTS)?;
    let w = WeightModel::new(&meters.sigmas())?;
    let est = wls_estimate(&h, &z, &w)?;

    for (i, theta) in est.state.0.iter().enumerate() {
        println!(
            "theta at bus {} = {theta:+.6} rad",
            net.state_bus(i).unwrap()
        );
    }
    for (i, (zi, fi)) in z.values().iter().zip(est.fitted.iter()).enumerate() {
        println!("meter {}: measured {zi:+.4}  fitted {fi:+.6}", i + 1);
    }
    println!("J(x) = {:.6}", est.objective);
    Ok(())
}
