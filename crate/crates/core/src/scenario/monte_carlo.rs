use rayon::prelude::*;

use super::{Injection, Pipeline, Scenario};
use crate::detection::DetectionMethod;
use crate::error::{Error, Result};
use crate::scenario::report::{Report, Value};

/// SplitMix64 finaliser; turns (base, trial) into well-spread stream seeds.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRate {
    pub method: DetectionMethod,
    pub confidence: f64,
    pub detections: usize,
    pub mean_statistic: f64,
    /// Trials where LNR named the meter carrying a gross error.
    pub identified: usize,
}

impl DetectorRate {
    pub fn rate(&self, trials: usize) -> f64 {
        self.detections as f64 / trials as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub name: String,
    pub trials: usize,
    pub base_seed: u64,
    pub detectors: Vec<DetectorRate>,
    /// Trials flagged by every configured detector.
    pub all_detected: usize,
    /// Trials flagged by at least one detector.
    pub any_detected: usize,
    /// Trials flagged by every detector with LNR naming the corrupted meter.
    pub all_detected_and_identified: usize,
    /// Trials where the injection left the residual and verdicts unchanged.
    pub stealthy: usize,
}

impl MonteCarloSummary {
    pub fn detector(&self, method: DetectionMethod) -> Option<&DetectorRate> {
        self.detectors.iter().find(|d| d.method == method)
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new(format!("monte carlo {}", self.name));
        r.push("montecarlo", "trials", None, Value::Int(self.trials as i64));
        r.push(
            "montecarlo",
            "base_seed",
            None,
            Value::Text(self.base_seed.to_string()),
        );
        for d in &self.detectors {
            let q = |name: &str| format!("{}.{name}", d.method);
            r.num("montecarlo", &q("confidence"), d.confidence);
            r.push(
                "montecarlo",
                &q("detections"),
                None,
                Value::Int(d.detections as i64),
            );
            r.num("montecarlo", &q("rate"), d.rate(self.trials));
            r.num("montecarlo", &q("mean_statistic"), d.mean_statistic);
            if d.method == DetectionMethod::LargestNormalizedResidual {
                r.push(
                    "montecarlo",
                    &q("identified"),
                    None,
                    Value::Int(d.identified as i64),
                );
            }
        }
        r.push(
            "montecarlo",
            "all_detected",
            None,
            Value::Int(self.all_detected as i64),
        );
        r.push(
            "montecarlo",
            "any_detected",
            None,
            Value::Int(self.any_detected as i64),
        );
        r.push(
            "montecarlo",
            "all_detected_and_identified",
            None,
            Value::Int(self.all_detected_and_identified as i64),
        );
        r.push(
            "montecarlo",
            "stealthy",
            None,
            Value::Int(self.stealthy as i64),
        );
        r
    }
}

struct Trial {
    detected: Vec<bool>,
    statistics: Vec<f64>,
    identified: Vec<bool>,
    stealthy: bool,
}

/// Repeats the scenario `trials` times. Trial `i` draws its measurement
/// noise and random attack from seeds derived from `base_seed` and `i`, so
/// the summary is identical for any thread count.
pub fn run_monte_carlo(
    scenario: &Scenario,
    trials: usize,
    base_seed: u64,
) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(Error::validation("trial count must be positive"));
    }
    let pipeline = Pipeline::new(scenario)?;
    let attack_seed = match &scenario.attack {
        super::AttackSpec::Random { seed, .. } => Some(*seed),
        _ => None,
    };

    let outcomes: Vec<Result<Trial>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let trial_seed = mix(base_seed, i);
            let eval =
                pipeline.evaluate(Some(trial_seed), attack_seed.map(|s| mix(s, trial_seed)))?;
            let target = match &eval.injection {
                Some(Injection::Gross { meter, .. }) => Some(*meter),
                _ => None,
            };
            Ok(Trial {
                detected: eval
                    .detections
                    .iter()
                    .map(|d| d.bad_data_detected)
                    .collect(),
                statistics: eval.detections.iter().map(|d| d.statistic).collect(),
                identified: eval
                    .detections
                    .iter()
                    .map(|d| d.bad_data_detected && target.is_some() && d.suspect_meter == target)
                    .collect(),
                stealthy: eval.stealth.unwrap_or(false),
            })
        })
        .collect();

    let k = scenario.detectors.len();
    let mut detections = vec![0usize; k];
    let mut stat_sum = vec![0.0; k];
    let mut identified = vec![0usize; k];
    let (mut all_detected, mut any_detected, mut joint, mut stealthy) = (0, 0, 0, 0);
    for outcome in outcomes {
        let t = outcome?;
        for j in 0..k {
            detections[j] += usize::from(t.detected[j]);
            stat_sum[j] += t.statistics[j];
            identified[j] += usize::from(t.identified[j]);
        }
        let all = k > 0 && t.detected.iter().all(|&d| d);
        all_detected += usize::from(all);
        let lnr_identified = scenario
            .detectors
            .iter()
            .zip(&t.identified)
            .any(|(d, &id)| d.method == DetectionMethod::LargestNormalizedResidual && id);
        joint += usize::from(all && lnr_identified);
        any_detected += usize::from(t.detected.iter().any(|&d| d));
        stealthy += usize::from(t.stealthy);
    }

    let detectors = scenario
        .detectors
        .iter()
        .enumerate()
        .map(|(j, d)| DetectorRate {
            method: d.method,
            confidence: d.confidence,
            detections: detections[j],
            mean_statistic: stat_sum[j] / trials as f64,
            identified: identified[j],
        })
        .collect();
    Ok(MonteCarloSummary {
        name: scenario.name.clone(),
        trials,
        base_seed,
        detectors,
        all_detected,
        any_detected,
        all_detected_and_identified: joint,
        stealthy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_spreads_neighbouring_seeds() {
        let a = mix(7, 0);
        let b = mix(7, 1);
        assert_ne!(a, b);
        assert!((a ^ b).count_ones() > 16);
        assert_eq!(mix(7, 0), a);
    }
}
