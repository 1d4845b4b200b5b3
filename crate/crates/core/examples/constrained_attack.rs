//! Which three-meter subsets admit a stealth attack, and what a targeted
//! attack on the 3-4 line looks like.

use std::collections::BTreeSet;

use gridfdi::attack::{
    projection_matrices, random_constrained_attack, targeted_attack, Completion,
};
use gridfdi::cases;
use gridfdi::grid::{build_h_matrix, BusId};

fn main() -> gridfdi::Result<()> {
    let (net, meters) = cases::five_bus_grid()?;
    let h = build_h_matrix(&net, &meters)?;
    let b = projection_matrices(&h)?.b;

    for i in 0..6 {
        for j in i + 1..6 {
            for k in j + 1..6 {
                let support = BTreeSet::from([i, j, k]);
                let atk = random_constrained_attack(&h, &support, 7, 0.1)?;
                let used: Vec<_> = atk.support.iter().map(|m| m + 1).collect();
                println!(
                    "controls {:?}: touches meters {used:?}, |B a| = {:.1e}",
                    [i + 1, j + 1, k + 1],
                    (&b * &atk.a).norm()
                );
            }
        }
    }

    let bus4 = net.state_index(BusId(4)).unwrap();
    let pins: Vec<_> = (0..h.n())
        .map(|s| (s, if s == bus4 { -0.01 } else { 0.0 }))
        .collect();
    let atk = targeted_attack(&h, &pins, Completion::MinimumMeasurementChange)?;
    println!("theta4 -= 0.01 needs a = {}", show(&atk.a));
    Ok(())
}

fn show(v: &nalgebra::DVector<f64>) -> String {
    let parts: Vec<_> = v
        .iter()
        .map(|x| format!("{:+.6}", if x.abs() < 5e-7 { 0.0 } else { *x }))
        .collect();
    format!("[{}]", parts.join(", "))
}
