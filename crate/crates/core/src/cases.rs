//! Built-in 5-bus test system.
//!
//! The same data ships as JSON under `cases/5bus/`; these constructors
//! exist so examples and tests can build the system without touching the
//! filesystem.

use crate::error::Result;
use crate::grid::{build_network, BranchSpec, MeterConfig, NetworkModel, NetworkSpec};
use crate::market::{DispatchCase, GeneratorSpec, LoadSpec, MarketSpec};

/// Branches as `(from, to, reactance p.u.)`, in meter order.
pub const FIVE_BUS_BRANCHES: [(u32, u32, f64); 6] = [
    (1, 2, 0.03),
    (1, 3, 0.05),
    (2, 4, 0.05),
    (2, 5, 0.08),
    (3, 4, 0.05),
    (4, 5, 0.08),
];

/// Metered branch flows, p.u.
pub const FIVE_BUS_MEASUREMENTS: [f64; 6] = [0.91, -0.16, 0.19, 0.21, 0.89, 0.09];

pub const DEFAULT_SIGMA: f64 = 0.01;

/// Flow limit on line 3-4 in the shipped market case, MW. The true
/// pre-attack flow is about 66.4 MW, so the limit only binds once the
/// operator's view has been falsified.
pub const LINE_34_LIMIT_MW: f64 = 70.0;

pub fn five_bus_network_spec() -> NetworkSpec {
    NetworkSpec {
        base_mva: 100.0,
        slack: 1,
        buses: vec![1, 2, 3, 4, 5],
        branches: FIVE_BUS_BRANCHES
            .iter()
            .map(|&(from, to, x_pu)| BranchSpec {
                from,
                to,
                x_pu,
                limit_mw: (from == 3 && to == 4).then_some(LINE_34_LIMIT_MW),
            })
            .collect(),
    }
}

/// Network plus one meter per branch, oriented low to high bus.
pub fn five_bus_grid() -> Result<(NetworkModel, MeterConfig)> {
    let net = build_network(&five_bus_network_spec())?;
    let meters = MeterConfig::per_branch(&net, DEFAULT_SIGMA)?;
    Ok((net, meters))
}

/// Generators (bus, $/MWh, MW cap) and loads of the market study.
pub fn five_bus_market_spec() -> MarketSpec {
    let generators = [(1, 10.0, 250.0), (3, 15.0, 300.0), (5, 30.0, 500.0)]
        .into_iter()
        .map(|(bus, price, pmax)| GeneratorSpec {
            bus,
            price,
            pmax,
            pmin: 0.0,
        })
        .collect();
    let loads = [(1, 100.0), (2, 100.0), (3, 200.0), (4, 40.0), (5, 60.0)]
        .into_iter()
        .map(|(bus, mw)| LoadSpec { bus, mw })
        .collect();
    MarketSpec { generators, loads }
}

pub fn five_bus_dispatch_case() -> Result<DispatchCase> {
    let (net, _) = five_bus_grid()?;
    DispatchCase::from_spec(net, &five_bus_market_spec())
}
