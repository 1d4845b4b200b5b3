//! Network topology, meter placement and the DC measurement matrix.
//!
//! Under the DC model every bus sits at 1 p.u. voltage and only the bus
//! angles are state. The slack bus angle is fixed at zero, so the state
//! vector holds one angle per non-slack bus, in the order the buses are
//! listed in the network.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Series reactance, per unit.
    pub reactance: f64,
    /// Thermal limit in MW; `None` is unconstrained.
    pub limit_mw: Option<f64>,
}

impl Branch {
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }
}

/// Case record as it appears in a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub base_mva: f64,
    pub slack: u32,
    pub buses: Vec<u32>,
    pub branches: Vec<BranchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub from: u32,
    pub to: u32,
    pub x_pu: f64,
    #[serde(default)]
    pub limit_mw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    buses: Vec<BusId>,
    branches: Vec<Branch>,
    slack: BusId,
    base_mva: f64,
    bus_pos: HashMap<BusId, usize>,
}

pub fn build_network(spec: &NetworkSpec) -> Result<NetworkModel> {
    if !(spec.base_mva > 0.0) || !spec.base_mva.is_finite() {
        return Err(Error::validation(format!(
            "base_mva must be positive, got {}",
            spec.base_mva
        )));
    }
    if spec.buses.is_empty() {
        return Err(Error::validation("network has no buses"));
    }
    let mut bus_pos = HashMap::new();
    for (i, &id) in spec.buses.iter().enumerate() {
        if id == 0 {
            return Err(Error::validation("bus ids must be positive"));
        }
        if bus_pos.insert(BusId(id), i).is_some() {
            return Err(Error::DuplicateBus(id));
        }
    }
    let slack = BusId(spec.slack);
    if !bus_pos.contains_key(&slack) {
        return Err(Error::validation(format!(
            "slack bus {} is not in the bus list",
            spec.slack
        )));
    }

    let mut branches = Vec::with_capacity(spec.branches.len());
    for (index, b) in spec.branches.iter().enumerate() {
        for end in [b.from, b.to] {
            if !bus_pos.contains_key(&BusId(end)) {
                return Err(Error::validation(format!(
                    "branch {} ({}-{}) references unknown bus {}",
                    index + 1,
                    b.from,
                    b.to,
                    end
                )));
            }
        }
        if b.from == b.to {
            return Err(Error::validation(format!(
                "branch {} connects bus {} to itself",
                index + 1,
                b.from
            )));
        }
        if !(b.x_pu > 0.0) || !b.x_pu.is_finite() {
            return Err(Error::NonPositiveReactance {
                index: index + 1,
                from: b.from,
                to: b.to,
                reactance: b.x_pu,
            });
        }
        if let Some(limit) = b.limit_mw {
            if !(limit > 0.0) {
                return Err(Error::validation(format!(
                    "branch {} ({}-{}) has non-positive flow limit {}",
                    index + 1,
                    b.from,
                    b.to,
                    limit
                )));
            }
        }
        branches.push(Branch {
            from: BusId(b.from),
            to: BusId(b.to),
            reactance: b.x_pu,
            limit_mw: b.limit_mw,
        });
    }

    let net = NetworkModel {
        buses: spec.buses.iter().copied().map(BusId).collect(),
        branches,
        slack,
        base_mva: spec.base_mva,
        bus_pos,
    };
    net.check_connected()?;
    Ok(net)
}

impl NetworkModel {
    fn check_connected(&self) -> Result<()> {
        let nb = self.buses.len();
        let mut adjacency = vec![Vec::new(); nb];
        for br in &self.branches {
            let (i, j) = (self.bus_pos[&br.from], self.bus_pos[&br.to]);
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        let mut seen = vec![false; nb];
        let start = self.bus_pos[&self.slack];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::DisconnectedGraph(self.buses[i].0)),
            None => Ok(()),
        }
    }

    pub fn buses(&self) -> &[BusId] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn slack(&self) -> BusId {
        self.slack
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// State dimension n (bus count minus the slack).
    pub fn n_states(&self) -> usize {
        self.buses.len() - 1
    }

    /// Position of a bus in the bus list.
    pub fn bus_index(&self, bus: BusId) -> Option<usize> {
        self.bus_pos.get(&bus).copied()
    }

    /// Column of a bus angle in H; `None` for the slack or an unknown bus.
    pub fn state_index(&self, bus: BusId) -> Option<usize> {
        let pos = self.bus_index(bus)?;
        let slack_pos = self.bus_pos[&self.slack];
        match pos.cmp(&slack_pos) {
            std::cmp::Ordering::Less => Some(pos),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(pos - 1),
        }
    }

    /// Bus whose angle occupies state column `index`.
    pub fn state_bus(&self, index: usize) -> Option<BusId> {
        self.buses
            .iter()
            .copied()
            .filter(|&b| b != self.slack)
            .nth(index)
    }

    /// Branch joining two buses, in either direction. Returns the branch
    /// index and whether `(a, b)` runs against its from→to orientation.
    pub fn find_branch(&self, a: BusId, b: BusId) -> Option<(usize, bool)> {
        self.branches.iter().enumerate().find_map(|(k, br)| {
            if br.from == a && br.to == b {
                Some((k, false))
            } else if br.from == b && br.to == a {
                Some((k, true))
            } else {
                None
            }
        })
    }

    /// Copy of the network with a different set of branch limits.
    pub fn with_limits(&self, limits: &[Option<f64>]) -> Result<NetworkModel> {
        if limits.len() != self.branches.len() {
            return Err(Error::dims(
                "branch limits",
                self.branches.len(),
                limits.len(),
            ));
        }
        let mut net = self.clone();
        for (br, &limit) in net.branches.iter_mut().zip(limits) {
            if let Some(l) = limit {
                if !(l > 0.0) {
                    return Err(Error::validation(format!("non-positive flow limit {l}")));
                }
            }
            br.limit_mw = limit;
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meter {
    pub branch: usize,
    /// Meter reads the flow to→from of its branch.
    pub reversed: bool,
    /// Standard deviation of the meter error, per unit.
    pub sigma: f64,
}

/// Meter file record: the flow is measured from `branch[0]` to `branch[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterSpec {
    pub branch: [u32; 2],
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterFile {
    pub meters: Vec<MeterSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeterConfig {
    meters: Vec<Meter>,
}

impl MeterConfig {
    pub fn new(net: &NetworkModel, meters: Vec<Meter>) -> Result<Self> {
        for (i, m) in meters.iter().enumerate() {
            if m.branch >= net.branches().len() {
                return Err(Error::UnknownBranch(format!(
                    "meter {} references branch index {}",
                    i + 1,
                    m.branch
                )));
            }
            if !(m.sigma > 0.0) || !m.sigma.is_finite() {
                return Err(Error::validation(format!(
                    "meter {} has non-positive sigma {}",
                    i + 1,
                    m.sigma
                )));
            }
        }
        if meters.len() < net.n_states() {
            return Err(Error::validation(format!(
                "{} meters cannot observe {} states",
                meters.len(),
                net.n_states()
            )));
        }
        Ok(Self { meters })
    }

    pub fn from_specs(net: &NetworkModel, specs: &[MeterSpec]) -> Result<Self> {
        let meters = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (branch, reversed) = net
                    .find_branch(BusId(s.branch[0]), BusId(s.branch[1]))
                    .ok_or_else(|| {
                        Error::UnknownBranch(format!(
                            "meter {} on {}-{}",
                            i + 1,
                            s.branch[0],
                            s.branch[1]
                        ))
                    })?;
                Ok(Meter {
                    branch,
                    reversed,
                    sigma: s.sigma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(net, meters)
    }

    /// One meter per branch, oriented from→to, all with the same sigma.
    pub fn per_branch(net: &NetworkModel, sigma: f64) -> Result<Self> {
        let meters = (0..net.branches().len())
            .map(|branch| Meter {
                branch,
                reversed: false,
                sigma,
            })
            .collect();
        Self::new(net, meters)
    }

    pub fn meters(&self) -> &[Meter] {
        &self.meters
    }

    pub fn len(&self) -> usize {
        self.meters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meters.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.meters.iter().map(|m| m.sigma).collect()
    }
}

/// The m×n matrix H relating bus angles to metered branch flows.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    h: DMatrix<f64>,
}

impl MeasurementMatrix {
    /// Wraps an arbitrary matrix; no observability check is made.
    pub fn from_matrix(h: DMatrix<f64>) -> Self {
        Self { h }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    pub fn n(&self) -> usize {
        self.h.ncols()
    }

    pub fn rank(&self) -> usize {
        linalg::rank(&self.h)
    }
}

pub fn build_h_matrix(net: &NetworkModel, meters: &MeterConfig) -> Result<MeasurementMatrix> {
    let n = net.n_states();
    let mut h = DMatrix::zeros(meters.len(), n);
    for (row, meter) in meters.meters().iter().enumerate() {
        let br = net.branches().get(meter.branch).ok_or_else(|| {
            Error::UnknownBranch(format!(
                "meter {} references branch index {}",
                row + 1,
                meter.branch
            ))
        })?;
        let (send, recv) = if meter.reversed {
            (br.to, br.from)
        } else {
            (br.from, br.to)
        };
        let b = br.susceptance();
        if let Some(col) = net.state_index(send) {
            h[(row, col)] += b;
        }
        if let Some(col) = net.state_index(recv) {
            h[(row, col)] -= b;
        }
    }
    let h = MeasurementMatrix { h };
    let rank = h.rank();
    if rank < n {
        return Err(Error::UnobservableConfiguration { rank, states: n });
    }
    Ok(h)
}
