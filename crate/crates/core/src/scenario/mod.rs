//! Scenario engine: measurements, optional attack, estimation, detection
//! and an optional before/after market study, driven from JSON files.

pub mod files;
mod monte_carlo;
pub mod report;

pub use monte_carlo::{run_monte_carlo, DetectorRate, MonteCarloSummary};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::attack::{random_constrained_attack, targeted_attack, AttackVector, Completion};
use crate::detection::{BadDataDetector, DetectionMethod, DetectionReport, DEFAULT_CONFIDENCE};
use crate::error::{Error, Result, StageExt};
use crate::estimator::{
    residual_norm, simulate_measurements, EstimationResult, MeasurementSet, StateVector,
    WeightModel, WlsEstimator,
};
use crate::grid::{build_h_matrix, BusId, MeasurementMatrix, MeterConfig, NetworkModel};
use crate::market::{
    arbitrage_profit, perceived_case_from_attack, solve_dc_opf, DispatchCase, DispatchResult,
};
use report::{detection_rows, dispatch_rows, estimation_rows, Report, Value};

pub const DEFAULT_ATTACK_MAGNITUDE: f64 = 0.1;

// ---- file schema ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub network: String,
    pub meters: String,
    pub measurements: MeasurementSourceSpec,
    #[serde(default)]
    pub attack: Option<AttackSpecFile>,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub market: Option<MarketStudyFile>,
}

fn default_detectors() -> Vec<DetectorSpec> {
    vec![
        DetectorSpec {
            method: DetectionMethod::ChiSquare,
            confidence: DEFAULT_CONFIDENCE,
        },
        DetectorSpec {
            method: DetectionMethod::LargestNormalizedResidual,
            confidence: DEFAULT_CONFIDENCE,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSourceSpec {
    File(String),
    Simulate { x_true: Vec<f64>, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpecFile {
    Random {
        /// 1-based meter numbers the attacker controls.
        support: Vec<usize>,
        seed: u64,
        #[serde(default = "default_magnitude")]
        magnitude: f64,
    },
    Targeted {
        /// Pinned state shift per bus id, radians.
        pins: BTreeMap<u32, f64>,
        #[serde(default)]
        completion: CompletionSpec,
    },
    GrossError {
        meter: usize,
        /// Error size in multiples of the meter's sigma.
        sigmas: f64,
    },
    Replay(String),
}

fn default_magnitude() -> f64 {
    DEFAULT_ATTACK_MAGNITUDE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionSpec {
    #[default]
    MinMeasurementChange,
    MinStateShift,
}

impl From<CompletionSpec> for Completion {
    fn from(c: CompletionSpec) -> Self {
        match c {
            CompletionSpec::MinMeasurementChange => Completion::MinimumMeasurementChange,
            CompletionSpec::MinStateShift => Completion::MinimumStateShift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub method: DetectionMethod,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketStudyFile {
    pub file: String,
    pub buy_bus: u32,
    pub sell_bus: u32,
    pub quantity_mw: f64,
}

// ---- resolved scenario ----------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementSource {
    Given(MeasurementSet),
    Simulate { x_true: StateVector, seed: u64 },
}

/// Attack stage, with 0-based meter and state indices.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackSpec {
    None,
    Random {
        support: BTreeSet<usize>,
        seed: u64,
        magnitude: f64,
    },
    Targeted {
        pins: Vec<(usize, f64)>,
        completion: Completion,
    },
    GrossError {
        meter: usize,
        sigmas: f64,
    },
    Replay(AttackVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketStudy {
    pub case: DispatchCase,
    pub buy_bus: BusId,
    pub sell_bus: BusId,
    pub quantity_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub network: NetworkModel,
    pub meters: MeterConfig,
    pub measurements: MeasurementSource,
    pub attack: AttackSpec,
    pub detectors: Vec<DetectorSpec>,
    pub market: Option<MarketStudy>,
}

impl Scenario {
    /// Loads a scenario file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file: ScenarioFile = files::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_file(&file, base)
    }

    pub fn from_file(file: &ScenarioFile, base: &Path) -> Result<Self> {
        let network = files::load_network(&files::resolve(base, file.network.as_ref()))?;
        let meters = files::load_meters(&files::resolve(base, file.meters.as_ref()), &network)?;
        let (m, n) = (meters.len(), network.n_states());

        let measurements = match &file.measurements {
            MeasurementSourceSpec::File(p) => {
                let z = files::load_measurements(&files::resolve(base, p.as_ref()))?;
                if z.len() != m {
                    return Err(Error::dims("measurement count", m, z.len()));
                }
                MeasurementSource::Given(z)
            }
            MeasurementSourceSpec::Simulate { x_true, seed } => {
                if x_true.len() != n {
                    return Err(Error::dims("x_true length", n, x_true.len()));
                }
                MeasurementSource::Simulate {
                    x_true: StateVector::from_slice(x_true),
                    seed: *seed,
                }
            }
        };

        let meter_index = |k: usize| {
            if k == 0 || k > m {
                Err(Error::validation(format!(
                    "meter {k} does not exist ({m} meters)"
                )))
            } else {
                Ok(k - 1)
            }
        };
        let attack = match &file.attack {
            None => AttackSpec::None,
            Some(AttackSpecFile::Random {
                support,
                seed,
                magnitude,
            }) => AttackSpec::Random {
                support: support
                    .iter()
                    .map(|&k| meter_index(k))
                    .collect::<Result<_>>()?,
                seed: *seed,
                magnitude: *magnitude,
            },
            Some(AttackSpecFile::Targeted { pins, completion }) => {
                let pins = pins
                    .iter()
                    .map(|(&bus, &v)| {
                        let idx = network.state_index(BusId(bus)).ok_or_else(|| {
                            Error::validation(format!("bus {bus} is the slack or does not exist"))
                        })?;
                        Ok((idx, v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                AttackSpec::Targeted {
                    pins,
                    completion: (*completion).into(),
                }
            }
            Some(AttackSpecFile::GrossError { meter, sigmas }) => AttackSpec::GrossError {
                meter: meter_index(*meter)?,
                sigmas: *sigmas,
            },
            Some(AttackSpecFile::Replay(p)) => {
                AttackSpec::Replay(files::load_attack(&files::resolve(base, p.as_ref()), m, n)?)
            }
        };

        let market = file
            .market
            .as_ref()
            .map(|mk| -> Result<MarketStudy> {
                let case = files::load_market(&files::resolve(base, mk.file.as_ref()), &network)?;
                for bus in [mk.buy_bus, mk.sell_bus] {
                    if network.bus_index(BusId(bus)).is_none() {
                        return Err(Error::UnknownBus(bus));
                    }
                }
                Ok(MarketStudy {
                    case,
                    buy_bus: BusId(mk.buy_bus),
                    sell_bus: BusId(mk.sell_bus),
                    quantity_mw: mk.quantity_mw,
                })
            })
            .transpose()?;

        Ok(Scenario {
            name: file.name.clone(),
            network,
            meters,
            measurements,
            attack,
            detectors: file.detectors.clone(),
            market,
        })
    }
}

// ---- pipeline -------------------------------------------------------------

/// Perturbation applied to the operator's measurements.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    /// Stealth attack in the column space of H.
    Stealth(AttackVector),
    /// Single-meter gross error, not in the column space of H.
    Gross { meter: usize, error: DVector<f64> },
}

impl Injection {
    pub fn vector(&self) -> &DVector<f64> {
        match self {
            Injection::Stealth(atk) => &atk.a,
            Injection::Gross { error, .. } => error,
        }
    }
}

/// Output of one pass through the estimation and detection stages.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub z: MeasurementSet,
    pub injection: Option<Injection>,
    pub clean: EstimationResult,
    /// Estimate from the measurements the operator actually receives.
    pub operator: EstimationResult,
    pub detections: Vec<DetectionReport>,
    /// Weighted residual norm unchanged and identical verdicts on clean and
    /// attacked data. `None` without an injection.
    pub stealth: Option<bool>,
}

/// H, estimator and detectors for a scenario, built once.
#[derive(Debug, Clone)]
pub(crate) struct Pipeline<'a> {
    scenario: &'a Scenario,
    h: MeasurementMatrix,
    estimator: WlsEstimator,
    detector: BadDataDetector,
}

impl<'a> Pipeline<'a> {
    pub(crate) fn new(scenario: &'a Scenario) -> Result<Self> {
        for d in &scenario.detectors {
            if !(d.confidence > 0.0 && d.confidence < 1.0) {
                return Err(Error::validation(format!(
                    "detector confidence must lie in (0, 1), got {}",
                    d.confidence
                )));
            }
        }
        let h = build_h_matrix(&scenario.network, &scenario.meters).stage("model")?;
        let w = WeightModel::new(&scenario.meters.sigmas()).stage("model")?;
        let estimator = WlsEstimator::new(&h, &w).stage("model")?;
        let detector = BadDataDetector::new(&estimator);
        Ok(Self {
            scenario,
            h,
            estimator,
            detector,
        })
    }

    pub(crate) fn evaluate(
        &self,
        measurement_seed: Option<u64>,
        attack_seed: Option<u64>,
    ) -> Result<Evaluation> {
        let s = self.scenario;
        let z = match &s.measurements {
            MeasurementSource::Given(z) => z.clone(),
            MeasurementSource::Simulate { x_true, seed } => simulate_measurements(
                &self.h,
                x_true,
                &s.meters.sigmas(),
                measurement_seed.unwrap_or(*seed),
            )
            .stage("measurements")?,
        };

        let injection = match &s.attack {
            AttackSpec::None => None,
            AttackSpec::Random {
                support,
                seed,
                magnitude,
            } => Some(Injection::Stealth(
                random_constrained_attack(
                    &self.h,
                    support,
                    attack_seed.unwrap_or(*seed),
                    *magnitude,
                )
                .stage("attack")?,
            )),
            AttackSpec::Targeted { pins, completion } => Some(Injection::Stealth(
                targeted_attack(&self.h, pins, *completion).stage("attack")?,
            )),
            AttackSpec::GrossError { meter, sigmas } => {
                let mut error = DVector::zeros(self.h.m());
                error[*meter] = sigmas * s.meters.meters()[*meter].sigma;
                Some(Injection::Gross {
                    meter: *meter,
                    error,
                })
            }
            AttackSpec::Replay(atk) => Some(Injection::Stealth(atk.clone())),
        };

        let clean = self.estimator.estimate(&z).stage("estimate")?;
        let operator = match &injection {
            None => clean.clone(),
            Some(inj) => self
                .estimator
                .estimate(&z.perturbed(inj.vector()).stage("attack")?)
                .stage("estimate")?,
        };

        let mut detections = Vec::with_capacity(s.detectors.len());
        let mut verdicts_match = true;
        for d in &s.detectors {
            let report = self
                .detector
                .run(d.method, &operator, d.confidence)
                .stage("detect")?;
            if injection.is_some() {
                let baseline = self
                    .detector
                    .run(d.method, &clean, d.confidence)
                    .stage("detect")?;
                verdicts_match &= baseline.bad_data_detected == report.bad_data_detected;
            }
            detections.push(report);
        }
        let stealth = injection.as_ref().map(|_| {
            let (r0, r1) = (residual_norm(&clean), residual_norm(&operator));
            verdicts_match && (r0 - r1).abs() <= 1e-9 * (1.0 + r0)
        });

        Ok(Evaluation {
            z,
            injection,
            clean,
            operator,
            detections,
            stealth,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MarketOutcome {
    pub before: DispatchResult,
    pub perceived_case: DispatchCase,
    pub after: DispatchResult,
    pub profit: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub evaluation: Evaluation,
    pub market: Option<MarketOutcome>,
    report: Report,
}

impl ScenarioReport {
    pub fn report(&self) -> &Report {
        &self.report
    }

    pub fn to_text(&self) -> String {
        self.report.to_text()
    }

    pub fn to_csv(&self) -> String {
        self.report.to_csv()
    }

    pub fn detection(&self, method: DetectionMethod) -> Option<&DetectionReport> {
        self.evaluation
            .detections
            .iter()
            .find(|d| d.method == method)
    }
}

pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport> {
    let pipeline = Pipeline::new(s)?;
    let eval = pipeline.evaluate(None, None)?;

    let market = s
        .market
        .as_ref()
        .map(|study| -> Result<MarketOutcome> {
            let before = solve_dc_opf(&study.case).stage("market_before")?;
            let perceived_case = perceived_case_from_attack(
                &study.case,
                &s.meters,
                &eval.clean.fitted,
                &eval.operator.fitted,
            )
            .stage("market_after")?;
            let after = solve_dc_opf(&perceived_case).stage("market_after")?;
            let profit = arbitrage_profit(
                &before,
                &after,
                study.buy_bus,
                study.sell_bus,
                study.quantity_mw,
            )
            .stage("profit")?;
            Ok(MarketOutcome {
                before,
                perceived_case,
                after,
                profit,
            })
        })
        .transpose()?;

    let report = build_report(s, &eval, market.as_ref());
    Ok(ScenarioReport {
        name: s.name.clone(),
        evaluation: eval,
        market,
        report,
    })
}

fn build_report(s: &Scenario, eval: &Evaluation, market: Option<&MarketOutcome>) -> Report {
    let mut r = Report::new(format!("scenario {}", s.name));
    let meter_no = |i: usize| i as i64 + 1;
    r.series(
        "measurements",
        "z_pu",
        eval.z
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (meter_no(i), v)),
    );

    if let Some(inj) = &eval.injection {
        match inj {
            Injection::Stealth(atk) => {
                r.push("attack", "kind", None, Value::Text("stealth".into()));
                r.series(
                    "attack",
                    "a_pu",
                    atk.a.iter().enumerate().map(|(i, &v)| (meter_no(i), v)),
                );
                let bus = |i: usize| i64::from(s.network.state_bus(i).expect("state").0);
                r.series(
                    "attack",
                    "c_rad",
                    atk.c.iter().enumerate().map(|(i, &v)| (bus(i), v)),
                );
                for &i in &atk.support {
                    r.push("attack", "support", Some(meter_no(i)), Value::Bool(true));
                }
            }
            Injection::Gross { meter, error } => {
                r.push("attack", "kind", None, Value::Text("gross_error".into()));
                r.push("attack", "meter", None, Value::Int(meter_no(*meter)));
                r.num("attack", "error_pu", error[*meter]);
            }
        }
        estimation_rows(&mut r, "baseline", &s.network, &eval.clean);
    }
    estimation_rows(&mut r, "estimate", &s.network, &eval.operator);
    r.num("estimate", "residual_norm", residual_norm(&eval.operator));
    for d in &eval.detections {
        detection_rows(&mut r, "detect", d);
    }
    if let Some(stealth) = eval.stealth {
        r.push("detect", "stealth", None, Value::Bool(stealth));
    }

    if let (Some(mk), Some(study)) = (market, s.market.as_ref()) {
        dispatch_rows(&mut r, "market_before", &s.network, &mk.before);
        let demand = mk.perceived_case.bus_demand();
        r.series(
            "market_after",
            "perceived_load_mw",
            s.network
                .buses()
                .iter()
                .zip(demand)
                .map(|(b, v)| (i64::from(b.0), v)),
        );
        dispatch_rows(&mut r, "market_after", &s.network, &mk.after);
        r.push(
            "profit",
            "buy_bus",
            None,
            Value::Int(i64::from(study.buy_bus.0)),
        );
        r.push(
            "profit",
            "sell_bus",
            None,
            Value::Int(i64::from(study.sell_bus.0)),
        );
        r.num("profit", "quantity_mw", study.quantity_mw);
        r.num("profit", "profit_per_h", mk.profit);
    }
    r
}
