//! An attack built as `a = H c` shifts the estimate by exactly `c` while the
//! residual, and with it every detector verdict, stays put.

use gridfdi::attack::{attack_from_c, verify_stealth};
use gridfdi::cases;
use gridfdi::estimator::{residual_norm, MeasurementSet, WeightModel, WlsEstimator};
use gridfdi::grid::build_h_matrix;
use nalgebra::DVector;

fn main() -> gridfdi::Result<()> {
    let (net, meters) = cases::five_bus_grid()?;
    let h = build_h_matrix(&net, &meters)?;
    let w = WeightModel::new(&meters.sigmas())?;
    let est = WlsEstimator::new(&h, &w)?;

    let z = MeasurementSet::from_slice(&cases::FIVE_BUS_MEASUREMENTS)?;
    let c = DVector::from_column_slice(&[0.002, -0.001, 0.004, 0.0]);
    let atk = attack_from_c(&h, &c)?;

    let before = est.estimate(&z)?;
    let after = est.estimate(&z.perturbed(&atk.a)?)?;
    println!("a = {}", show(&atk.a));
    println!(
        "estimate shift = {}",
        show(&(&after.state.0 - &before.state.0))
    );
    println!(
        "residual norm {:.9} -> {:.9}",
        residual_norm(&before),
        residual_norm(&after)
    );
    println!("stealthy: {}", verify_stealth(&z, &atk, &h, &w, 0.99)?);
    Ok(())
}

fn show(v: &nalgebra::DVector<f64>) -> String {
    let parts: Vec<_> = v
        .iter()
        .map(|x| format!("{:+.6}", if x.abs() < 5e-7 { 0.0 } else { *x }))
        .collect();
    format!("[{}]", parts.join(", "))
}
