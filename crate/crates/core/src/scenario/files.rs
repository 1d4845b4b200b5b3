//! JSON case files.
//!
//! Meter numbers in files are 1-based, matching the order of the meters
//! file; the library API is 0-based throughout.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attack::AttackVector;
use crate::error::{Error, Result};
use crate::estimator::MeasurementSet;
use crate::grid::{build_network, MeterConfig, MeterFile, NetworkModel, NetworkSpec};
use crate::market::{DispatchCase, MarketSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFile {
    pub values_pu: Vec<f64>,
}

/// Replayable attack record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackFile {
    pub c: Vec<f64>,
    pub a: Vec<f64>,
    /// 1-based meter numbers.
    pub support: Vec<usize>,
}

impl From<&AttackVector> for AttackFile {
    fn from(atk: &AttackVector) -> Self {
        Self {
            c: atk.c.iter().copied().collect(),
            a: atk.a.iter().copied().collect(),
            support: atk.support.iter().map(|i| i + 1).collect(),
        }
    }
}

impl AttackFile {
    pub fn to_attack(&self, m: usize, n: usize) -> Result<AttackVector> {
        if self.a.len() != m {
            return Err(Error::dims("attack vector length", m, self.a.len()));
        }
        if self.c.len() != n {
            return Err(Error::dims("state shift length", n, self.c.len()));
        }
        let support: BTreeSet<usize> = self
            .support
            .iter()
            .map(|&k| {
                if k == 0 || k > m {
                    Err(Error::validation(format!("support meter {k} out of range")))
                } else {
                    Ok(k - 1)
                }
            })
            .collect::<Result<_>>()?;
        if let Some(i) = (0..m).find(|i| !support.contains(i) && self.a[*i] != 0.0) {
            return Err(Error::validation(format!(
                "attack is nonzero on meter {} outside its support",
                i + 1
            )));
        }
        Ok(AttackVector {
            a: DVector::from_column_slice(&self.a),
            c: DVector::from_column_slice(&self.c),
            support,
        })
    }
}

/// Reads and deserializes a JSON file, mapping failures to line/column
/// precise parse errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: "0:0".into(),
        reason: e.to_string(),
    })?;
    parse_json(&text, path)
}

pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            location: "1:1".into(),
            reason: "file is empty".into(),
        });
    }
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: format!("{}:{}", e.line(), e.column()),
        reason: e.to_string(),
    })
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Parse { .. } => e,
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        e => e,
    })
}

pub fn load_network(path: &Path) -> Result<NetworkModel> {
    let spec: NetworkSpec = read_json(path)?;
    in_file(path, build_network(&spec))
}

pub fn load_meters(path: &Path, net: &NetworkModel) -> Result<MeterConfig> {
    let file: MeterFile = read_json(path)?;
    in_file(path, MeterConfig::from_specs(net, &file.meters))
}

pub fn load_measurements(path: &Path) -> Result<MeasurementSet> {
    let file: MeasurementFile = read_json(path)?;
    in_file(path, MeasurementSet::from_slice(&file.values_pu))
}

pub fn load_market(path: &Path, net: &NetworkModel) -> Result<DispatchCase> {
    let spec: MarketSpec = read_json(path)?;
    in_file(path, DispatchCase::from_spec(net.clone(), &spec))
}

pub fn load_attack(path: &Path, m: usize, n: usize) -> Result<AttackVector> {
    let file: AttackFile = read_json(path)?;
    in_file(path, file.to_attack(m, n))
}

/// Network, meters and, when given, the market case.
pub fn parse_case_files(
    network: &Path,
    meters: &Path,
    market: Option<&Path>,
) -> Result<(NetworkModel, MeterConfig, Option<DispatchCase>)> {
    let net = load_network(network)?;
    let meters = load_meters(meters, &net)?;
    let market = market.map(|p| load_market(p, &net)).transpose()?;
    Ok((net, meters, market))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: "0:0".into(),
        reason: format!("write failed: {e}"),
    })
}

pub(crate) fn resolve(base: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        rel.to_path_buf()
    } else {
        base.join(rel)
    }
}
