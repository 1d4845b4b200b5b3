//! DC optimal power flow with locational marginal prices.
//!
//! Generator outputs and non-slack bus angles are the decision variables;
//! branch flows are linear in the angles. The LMP of a bus is the dual of
//! its power-balance row, i.e. the cost of serving one more MW there.

pub mod lp;

use std::collections::BTreeSet;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusId, MeterConfig, NetworkModel};
use lp::{ConstraintKind, LinearProgram, LpError};

/// Tolerance for treating a line as loaded to its limit, MW.
pub const BINDING_TOL_MW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub bus: u32,
    pub price: f64,
    pub pmax: f64,
    #[serde(default)]
    pub pmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub bus: u32,
    pub mw: f64,
}

/// Market file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub generators: Vec<GeneratorSpec>,
    pub loads: Vec<LoadSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    /// Offer price, $/MWh.
    pub price: f64,
    pub p_max: f64,
    pub p_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub bus: BusId,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchCase {
    network: NetworkModel,
    generators: Vec<Generator>,
    loads: Vec<Load>,
}

impl DispatchCase {
    pub fn new(
        network: NetworkModel,
        generators: Vec<Generator>,
        loads: Vec<Load>,
    ) -> Result<Self> {
        for (i, g) in generators.iter().enumerate() {
            if network.bus_index(g.bus).is_none() {
                return Err(Error::UnknownBus(g.bus.0));
            }
            if !(g.p_min >= 0.0 && g.p_min <= g.p_max && g.p_max.is_finite()) {
                return Err(Error::validation(format!(
                    "generator {} needs 0 <= pmin <= pmax, got [{}, {}]",
                    i + 1,
                    g.p_min,
                    g.p_max
                )));
            }
            if !(g.price >= 0.0) || !g.price.is_finite() {
                return Err(Error::validation(format!(
                    "generator {} has invalid price {}",
                    i + 1,
                    g.price
                )));
            }
        }
        for l in &loads {
            if network.bus_index(l.bus).is_none() {
                return Err(Error::UnknownBus(l.bus.0));
            }
            if !(l.demand >= 0.0) || !l.demand.is_finite() {
                return Err(Error::validation(format!(
                    "load at bus {} has invalid demand {}",
                    l.bus, l.demand
                )));
            }
        }
        let capacity: f64 = generators.iter().map(|g| g.p_max).sum();
        let demand: f64 = loads.iter().map(|l| l.demand).sum();
        if capacity < demand {
            return Err(Error::InfeasibleDispatch(format!(
                "capacity {capacity} MW is below demand {demand} MW"
            )));
        }
        Ok(Self {
            network,
            generators,
            loads,
        })
    }

    pub fn from_spec(network: NetworkModel, spec: &MarketSpec) -> Result<Self> {
        let generators = spec
            .generators
            .iter()
            .map(|g| Generator {
                bus: BusId(g.bus),
                price: g.price,
                p_max: g.pmax,
                p_min: g.pmin,
            })
            .collect();
        let loads = spec
            .loads
            .iter()
            .map(|l| Load {
                bus: BusId(l.bus),
                demand: l.mw,
            })
            .collect();
        Self::new(network, generators, loads)
    }

    pub fn network(&self) -> &NetworkModel {
        &self.network
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn loads(&self) -> &[Load] {
        &self.loads
    }

    /// Total demand per bus, in network bus order.
    pub fn bus_demand(&self) -> Vec<f64> {
        let mut demand = vec![0.0; self.network.buses().len()];
        for l in &self.loads {
            demand[self.network.bus_index(l.bus).expect("validated")] += l.demand;
        }
        demand
    }

    /// Same case with `delta` MW of extra demand at `bus`.
    pub fn with_extra_load(&self, bus: BusId, delta: f64) -> Result<Self> {
        if self.network.bus_index(bus).is_none() {
            return Err(Error::UnknownBus(bus.0));
        }
        let mut loads = self.loads.clone();
        match loads.iter_mut().find(|l| l.bus == bus) {
            Some(l) => l.demand += delta,
            None => loads.push(Load { bus, demand: delta }),
        }
        Self::new(self.network.clone(), self.generators.clone(), loads)
    }

    pub fn with_network(&self, network: NetworkModel) -> Result<Self> {
        Self::new(network, self.generators.clone(), self.loads.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    buses: Vec<BusId>,
    /// MW per generator, in case order.
    pub gen_output: Vec<f64>,
    /// MW per branch in its from→to direction.
    pub flows: Vec<f64>,
    /// $/MWh per bus, in network bus order.
    pub lmp: Vec<f64>,
    /// $/h.
    pub objective: f64,
    /// Branches loaded to their limit.
    pub binding_lines: BTreeSet<usize>,
    /// Shadow price of each branch limit, $/MWh per MW of extra capacity.
    pub congestion_price: Vec<f64>,
}

impl DispatchResult {
    pub fn buses(&self) -> &[BusId] {
        &self.buses
    }

    pub fn lmp_at(&self, bus: BusId) -> Option<f64> {
        self.buses
            .iter()
            .position(|&b| b == bus)
            .map(|i| self.lmp[i])
    }
}

pub fn solve_dc_opf(case: &DispatchCase) -> Result<DispatchResult> {
    let net = &case.network;
    let ng = case.generators.len();
    let ns = net.n_states();
    let base = net.base_mva();
    let mut prog = LinearProgram::new(ng + ns);
    for (g, gen) in case.generators.iter().enumerate() {
        prog.set_cost(g, gen.price);
        prog.set_bounds(g, gen.p_min, gen.p_max);
    }
    for s in 0..ns {
        prog.set_bounds(ng + s, f64::NEG_INFINITY, f64::INFINITY);
    }

    // MW flow of each branch as coefficients on the angle variables
    let flow_terms: Vec<Vec<(usize, f64)>> = net
        .branches()
        .iter()
        .map(|br| {
            let k = base / br.reactance;
            let mut terms = Vec::with_capacity(2);
            if let Some(i) = net.state_index(br.from) {
                terms.push((ng + i, k));
            }
            if let Some(j) = net.state_index(br.to) {
                terms.push((ng + j, -k));
            }
            terms
        })
        .collect();

    let demand = case.bus_demand();
    let mut balance_rows = Vec::with_capacity(net.buses().len());
    for (pos, &bus) in net.buses().iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = case
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.bus == bus)
            .map(|(g, _)| (g, 1.0))
            .collect();
        for (br, terms) in net.branches().iter().zip(&flow_terms) {
            let sign = if br.from == bus {
                -1.0
            } else if br.to == bus {
                1.0
            } else {
                continue;
            };
            coeffs.extend(terms.iter().map(|&(v, k)| (v, sign * k)));
        }
        balance_rows.push(prog.add_constraint(coeffs, ConstraintKind::Eq, demand[pos]));
    }

    let mut limit_rows = Vec::new();
    for (k, br) in net.branches().iter().enumerate() {
        if let Some(limit) = br.limit_mw {
            let up = prog.add_constraint(flow_terms[k].clone(), ConstraintKind::Le, limit);
            let neg: Vec<(usize, f64)> = flow_terms[k].iter().map(|&(v, c)| (v, -c)).collect();
            let down = prog.add_constraint(neg, ConstraintKind::Le, limit);
            limit_rows.push((k, up, down));
        }
    }

    let sol = prog.solve().map_err(|e| match e {
        LpError::Infeasible => {
            Error::InfeasibleDispatch("no dispatch satisfies the network limits".into())
        }
        LpError::Unbounded => Error::UnboundedProblem,
    })?;

    let gen_output = sol.x[..ng].to_vec();
    let flows: Vec<f64> = flow_terms
        .iter()
        .map(|terms| terms.iter().map(|&(v, k)| k * sol.x[v]).sum())
        .collect();
    let lmp = balance_rows.iter().map(|&r| sol.duals[r]).collect();
    let mut congestion_price = vec![0.0; net.branches().len()];
    let mut binding_lines = BTreeSet::new();
    for &(k, up, down) in &limit_rows {
        congestion_price[k] = -(sol.duals[up] + sol.duals[down]);
        let limit = net.branches()[k].limit_mw.expect("limited branch");
        if flows[k].abs() >= limit - BINDING_TOL_MW {
            binding_lines.insert(k);
        }
    }
    let objective = case
        .generators
        .iter()
        .zip(&gen_output)
        .map(|(g, p)| g.price * p)
        .sum();

    Ok(DispatchResult {
        buses: net.buses().to_vec(),
        gen_output,
        flows,
        lmp,
        objective,
        binding_lines,
        congestion_price,
    })
}

/// The dispatch case as the operator sees it once the estimated branch
/// flows have moved from `flows_before` to `flows_after` (per unit, one
/// entry per meter). Bus loads absorb the implied change in net injection.
pub fn perceived_case_from_attack(
    case: &DispatchCase,
    meters: &MeterConfig,
    flows_before: &DVector<f64>,
    flows_after: &DVector<f64>,
) -> Result<DispatchCase> {
    let m = meters.len();
    if flows_before.len() != m {
        return Err(Error::dims("pre-attack flow count", m, flows_before.len()));
    }
    if flows_after.len() != m {
        return Err(Error::dims("post-attack flow count", m, flows_after.len()));
    }
    let net = &case.network;
    let base = net.base_mva();

    // mean oriented change per metered branch, MW in from→to direction
    let nbr = net.branches().len();
    let mut delta = vec![0.0; nbr];
    let mut count = vec![0usize; nbr];
    for (i, meter) in meters.meters().iter().enumerate() {
        let b = meter.branch;
        if b >= nbr {
            return Err(Error::UnknownBranch(format!(
                "meter {} branch index {b}",
                i + 1
            )));
        }
        let sign = if meter.reversed { -1.0 } else { 1.0 };
        delta[b] += sign * (flows_after[i] - flows_before[i]) * base;
        count[b] += 1;
    }

    let mut injection = vec![0.0; net.buses().len()];
    for (k, br) in net.branches().iter().enumerate() {
        if count[k] == 0 {
            continue;
        }
        let d = delta[k] / count[k] as f64;
        injection[net.bus_index(br.from).expect("validated")] += d;
        injection[net.bus_index(br.to).expect("validated")] -= d;
    }

    let demand = case.bus_demand();
    let mut loads = Vec::new();
    for (pos, &bus) in net.buses().iter().enumerate() {
        let mut perceived = demand[pos] - injection[pos];
        if perceived.abs() < 1e-9 {
            perceived = 0.0;
        }
        if perceived < 0.0 {
            return Err(Error::validation(format!(
                "perceived load at bus {bus} would be negative ({perceived:.6} MW)"
            )));
        }
        if perceived != 0.0 || case.loads.iter().any(|l| l.bus == bus) {
            loads.push(Load {
                bus,
                demand: perceived,
            });
        }
    }
    DispatchCase::new(net.clone(), case.generators.clone(), loads)
}

/// Profit of buying `quantity` MW at `buy_bus` before the attack and
/// selling it at `sell_bus` afterwards, $/h.
pub fn arbitrage_profit(
    before: &DispatchResult,
    after: &DispatchResult,
    buy_bus: BusId,
    sell_bus: BusId,
    quantity: f64,
) -> Result<f64> {
    if !(quantity >= 0.0) {
        return Err(Error::validation(format!(
            "quantity must be non-negative, got {quantity}"
        )));
    }
    let buy = before.lmp_at(buy_bus).ok_or(Error::UnknownBus(buy_bus.0))?;
    let sell = after
        .lmp_at(sell_bus)
        .ok_or(Error::UnknownBus(sell_bus.0))?;
    Ok(quantity * (sell - buy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::{build_network, BranchSpec, NetworkSpec};

    fn net(spec: NetworkSpec) -> NetworkModel {
        build_network(&spec).unwrap()
    }

    #[test]
    fn single_bus() {
        let network = net(NetworkSpec {
            base_mva: 100.0,
            slack: 1,
            buses: vec![1],
            branches: vec![],
        });
        let case = DispatchCase::new(
            network,
            vec![Generator {
                bus: BusId(1),
                price: 10.0,
                p_max: 100.0,
                p_min: 0.0,
            }],
            vec![Load {
                bus: BusId(1),
                demand: 50.0,
            }],
        )
        .unwrap();
        let r = solve_dc_opf(&case).unwrap();
        assert!((r.gen_output[0] - 50.0).abs() < 1e-9);
        assert!((r.lmp[0] - 10.0).abs() < 1e-9);
        assert!((r.objective - 500.0).abs() < 1e-9);
    }

    fn congested_pair() -> DispatchCase {
        let network = net(NetworkSpec {
            base_mva: 100.0,
            slack: 1,
            buses: vec![1, 2],
            branches: vec![BranchSpec {
                from: 1,
                to: 2,
                x_pu: 0.1,
                limit_mw: Some(10.0),
            }],
        });
        DispatchCase::new(
            network,
            vec![
                Generator {
                    bus: BusId(1),
                    price: 10.0,
                    p_max: 100.0,
                    p_min: 0.0,
                },
                Generator {
                    bus: BusId(2),
                    price: 40.0,
                    p_max: 100.0,
                    p_min: 0.0,
                },
            ],
            vec![Load {
                bus: BusId(2),
                demand: 30.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn congested_import_prices_at_local_unit() {
        let case = congested_pair();
        let r = solve_dc_opf(&case).unwrap();
        assert!((r.flows[0] - 10.0).abs() < 1e-9);
        assert!((r.lmp[0] - 10.0).abs() < 1e-9);
        assert!((r.lmp[1] - 40.0).abs() < 1e-9);
        assert!(r.binding_lines.contains(&0));
        assert!((r.congestion_price[0] - 30.0).abs() < 1e-9);

        // finite-difference oracle for both duals
        for (pos, bus) in [BusId(1), BusId(2)].into_iter().enumerate() {
            let bumped = solve_dc_opf(&case.with_extra_load(bus, 1.0).unwrap()).unwrap();
            assert!((bumped.objective - r.objective - r.lmp[pos]).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_network() {
        // all capacity behind a 10 MW line but 30 MW of remote load
        let network = net(NetworkSpec {
            base_mva: 100.0,
            slack: 1,
            buses: vec![1, 2],
            branches: vec![BranchSpec {
                from: 1,
                to: 2,
                x_pu: 0.1,
                limit_mw: Some(10.0),
            }],
        });
        let case = DispatchCase::new(
            network,
            vec![Generator {
                bus: BusId(1),
                price: 10.0,
                p_max: 100.0,
                p_min: 0.0,
            }],
            vec![Load {
                bus: BusId(2),
                demand: 30.0,
            }],
        )
        .unwrap();
        assert!(matches!(
            solve_dc_opf(&case),
            Err(Error::InfeasibleDispatch(_))
        ));
    }

    #[test]
    fn case_validation() {
        let network = cases::five_bus_grid().unwrap().0;
        let over = DispatchCase::new(
            network.clone(),
            vec![Generator {
                bus: BusId(1),
                price: 10.0,
                p_max: 10.0,
                p_min: 0.0,
            }],
            vec![Load {
                bus: BusId(2),
                demand: 30.0,
            }],
        );
        assert!(matches!(over, Err(Error::InfeasibleDispatch(_))));
        let unknown = DispatchCase::new(
            network,
            vec![Generator {
                bus: BusId(9),
                price: 10.0,
                p_max: 10.0,
                p_min: 0.0,
            }],
            vec![],
        );
        assert!(matches!(unknown, Err(Error::UnknownBus(9))));
    }

    #[test]
    fn five_bus_before_attack() {
        let case = cases::five_bus_dispatch_case().unwrap();
        let r = solve_dc_opf(&case).unwrap();
        for &p in &r.lmp {
            assert!((p - 15.0).abs() < 1e-9);
        }
        assert!((r.gen_output[0] - 250.0).abs() < 1e-9);
        assert!((r.gen_output[1] - 250.0).abs() < 1e-9);
        assert!(r.gen_output[2].abs() < 1e-9);
        assert!(r.binding_lines.is_empty());
        assert!(r.flows[4] < cases::LINE_34_LIMIT_MW);
    }

    #[test]
    fn uncongested_price_is_marginal_unit() {
        let case = cases::five_bus_dispatch_case().unwrap();
        let unlimited = case.network().with_limits(&[None; 6]).unwrap();
        let case = case
            .with_network(unlimited)
            .unwrap()
            .with_extra_load(BusId(4), 300.0)
            .unwrap();
        let r = solve_dc_opf(&case).unwrap();
        // 800 MW: gen 1 and 2 full, gen 3 marginal
        for &p in &r.lmp {
            assert!((p - 30.0).abs() < 1e-9);
            assert_eq!(format!("{p:.6}"), "30.000000");
        }
    }

    #[test]
    fn perceived_case_shifts_branch_endpoints() {
        let (network, meters) = cases::five_bus_grid().unwrap();
        let case = cases::five_bus_dispatch_case().unwrap();
        let before = DVector::from_column_slice(&[0.5, 0.1, 0.2, 0.1, 0.6, 0.1]);
        let same = perceived_case_from_attack(&case, &meters, &before, &before).unwrap();
        assert_eq!(same.bus_demand(), case.bus_demand());

        let mut after = before.clone();
        after[4] += 0.2;
        let shifted = perceived_case_from_attack(&case, &meters, &before, &after).unwrap();
        let (d0, d1) = (case.bus_demand(), shifted.bus_demand());
        let b3 = network.bus_index(BusId(3)).unwrap();
        let b4 = network.bus_index(BusId(4)).unwrap();
        assert!((d1[b3] - (d0[b3] - 20.0)).abs() < 1e-9);
        assert!((d1[b4] - (d0[b4] + 20.0)).abs() < 1e-9);
        let short = DVector::zeros(5);
        assert!(perceived_case_from_attack(&case, &meters, &short, &after).is_err());
    }

    #[test]
    fn profit_arithmetic() {
        let case = cases::five_bus_dispatch_case().unwrap();
        let r = solve_dc_opf(&case).unwrap();
        assert_eq!(
            arbitrage_profit(&r, &r, BusId(1), BusId(4), 0.0).unwrap(),
            0.0
        );
        assert!(
            arbitrage_profit(&r, &r, BusId(1), BusId(4), 5.0)
                .unwrap()
                .abs()
                < 1e-9
        );
        assert!(matches!(
            arbitrage_profit(&r, &r, BusId(1), BusId(7), 1.0),
            Err(Error::UnknownBus(7))
        ));
        assert!(arbitrage_profit(&r, &r, BusId(1), BusId(4), -1.0).is_err());

        // reference prices: buy bus 1 at 15, sell bus 4 at 32.88
        let mut ref_before = r.clone();
        ref_before.lmp = vec![15.0; 5];
        let mut ref_after = r;
        ref_after.lmp = vec![22.57, 27.12, 15.0, 32.88, 30.0];
        let p = arbitrage_profit(&ref_before, &ref_after, BusId(1), BusId(4), 1.0).unwrap();
        assert!((p - 17.88).abs() < 1e-9);
    }
}
