//! Detection rates over many seeded trials: false alarms on clean data,
//! and hit rates for a gross error and for a stealth attack.

use std::path::Path;

use gridfdi::scenario::{run_monte_carlo, Scenario};

fn main() -> gridfdi::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases/5bus");
    for (file, trials) in [
        ("calibration.json", 10_000),
        ("case2.json", 1000),
        ("case3.json", 1000),
    ] {
        let scenario = Scenario::load(&dir.join(file))?;
        let summary = run_monte_carlo(&scenario, trials, 2024)?;
        print!("{}", summary.to_report().to_text());
    }
    Ok(())
}
