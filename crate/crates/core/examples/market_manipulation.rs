//! Runs the shipped profit scenario: a stealth attack makes line 3-4 look
//! congested, LMPs split, and a trader who bought at bus 1 sells at bus 4.

use std::path::Path;

use gridfdi::scenario::{run_scenario, Scenario};

fn main() -> gridfdi::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases/5bus/profit.json");
    let out = run_scenario(&Scenario::load(&path)?)?;
    let market = out
        .market
        .as_ref()
        .expect("profit scenario has a market study");

    println!("bus  LMP before  LMP after");
    for (k, bus) in market.before.buses().iter().enumerate() {
        println!(
            "{bus:>3}  {:>10.3}  {:>9.3}",
            market.before.lmp[k], market.after.lmp[k]
        );
    }
    println!("generation after: {:?}", market.after.gen_output);
    println!("profit per MW: {:.4} $/h", market.profit);
    println!("stealthy: {:?}", out.evaluation.stealth);
    Ok(())
}
