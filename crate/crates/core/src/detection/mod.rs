//! Residual-based bad-data detection: the chi-square test on the weighted
//! residual sum of squares and the largest normalized residual (LNR) test.

mod quantile;

pub use quantile::{chi_square_quantile, gaussian_quantile};

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, WeightModel, WlsEstimator};
use crate::grid::MeasurementMatrix;

pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Relative floor on `omega_ii / R_ii` below which a meter is critical.
pub const CRITICALITY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMethod {
    ChiSquare,
    #[serde(alias = "lnr")]
    LargestNormalizedResidual,
}

impl fmt::Display for DetectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectionMethod::ChiSquare => "chi_square",
            DetectionMethod::LargestNormalizedResidual => "lnr",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub method: DetectionMethod,
    pub statistic: f64,
    /// Threshold tau; bad data is flagged when `statistic > threshold`.
    pub threshold: f64,
    pub bad_data_detected: bool,
    /// Meter (0-based) with the largest normalized residual, LNR only.
    pub suspect_meter: Option<usize>,
    pub confidence: f64,
    /// Critical meters left out of the LNR statistic.
    pub excluded_meters: Vec<usize>,
}

fn check_confidence(confidence: f64) -> Result<()> {
    if confidence > 0.0 && confidence < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )))
    }
}

/// Compares J against the chi-square quantile with `m - n` degrees of freedom.
pub fn chi_square_test(
    res: &EstimationResult,
    m: usize,
    n: usize,
    confidence: f64,
) -> Result<DetectionReport> {
    check_confidence(confidence)?;
    if m <= n {
        return Err(Error::DegenerateFreedom { m, n });
    }
    let nu = u32::try_from(m - n).map_err(|_| Error::validation("too many degrees of freedom"))?;
    let threshold = chi_square_quantile(confidence, nu)?;
    let statistic = res.objective;
    Ok(DetectionReport {
        method: DetectionMethod::ChiSquare,
        statistic,
        threshold,
        bad_data_detected: statistic > threshold,
        suspect_meter: None,
        confidence,
        excluded_meters: Vec::new(),
    })
}

/// Covariance of the residual vector, `omega = R - H G^-1 H^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCovariance {
    pub omega: DMatrix<f64>,
    variances: DVector<f64>,
}

impl ResidualCovariance {
    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    /// Meters whose residual variance is structurally zero.
    pub fn critical_meters(&self) -> Vec<usize> {
        (0..self.omega.nrows())
            .filter(|&i| self.omega[(i, i)] < CRITICALITY_FLOOR * self.variances[i])
            .collect()
    }
}

pub fn residual_covariance(h: &MeasurementMatrix, w: &WeightModel) -> Result<ResidualCovariance> {
    let est = WlsEstimator::new(h, w)?;
    Ok(residual_covariance_from(&est))
}

pub(crate) fn residual_covariance_from(est: &WlsEstimator) -> ResidualCovariance {
    let hm = est.h().matrix();
    let variances = est.weights().variances();
    // G^-1 H^T via the estimator's factorization
    let g_inv_ht = est.gain_solve(&hm.transpose());
    let mut omega = DMatrix::from_diagonal(&variances) - hm * g_inv_ht;
    // symmetrize away rounding
    omega = (&omega + omega.transpose()) * 0.5;
    ResidualCovariance { omega, variances }
}

/// Largest normalized residual `max |r_i| / sqrt(omega_ii)` against the
/// two-sided Gaussian quantile at `confidence`.
pub fn lnr_test(
    res: &EstimationResult,
    omega: &ResidualCovariance,
    confidence: f64,
) -> Result<DetectionReport> {
    check_confidence(confidence)?;
    let m = omega.omega.nrows();
    if res.residual.len() != m {
        return Err(Error::dims("residual length", m, res.residual.len()));
    }
    let excluded = omega.critical_meters();
    if excluded.len() == m {
        return Err(Error::AllMetersCritical);
    }
    if !excluded.is_empty() {
        log::warn!(
            "meters {:?} are critical and excluded from the normalized residual test",
            excluded.iter().map(|i| i + 1).collect::<Vec<_>>()
        );
    }
    let mut best: Option<(usize, f64)> = None;
    for i in (0..m).filter(|i| !excluded.contains(i)) {
        let nr = res.residual[i].abs() / omega.omega[(i, i)].sqrt();
        // strict comparison keeps the lowest index on ties
        if best.is_none_or(|(_, b)| nr > b) {
            best = Some((i, nr));
        }
    }
    let (argmax, statistic) = best.expect("at least one non-critical meter");
    let threshold = gaussian_quantile(1.0 - (1.0 - confidence) / 2.0)?;
    let detected = statistic > threshold;
    Ok(DetectionReport {
        method: DetectionMethod::LargestNormalizedResidual,
        statistic,
        threshold,
        bad_data_detected: detected,
        suspect_meter: detected.then_some(argmax),
        confidence,
        excluded_meters: excluded,
    })
}

/// Both detectors bound to one H and weight model.
#[derive(Debug, Clone)]
pub struct BadDataDetector {
    m: usize,
    n: usize,
    omega: ResidualCovariance,
}

impl BadDataDetector {
    pub fn new(est: &WlsEstimator) -> Self {
        Self {
            m: est.h().m(),
            n: est.h().n(),
            omega: residual_covariance_from(est),
        }
    }

    pub fn covariance(&self) -> &ResidualCovariance {
        &self.omega
    }

    pub fn run(
        &self,
        method: DetectionMethod,
        res: &EstimationResult,
        confidence: f64,
    ) -> Result<DetectionReport> {
        match method {
            DetectionMethod::ChiSquare => chi_square_test(res, self.m, self.n, confidence),
            DetectionMethod::LargestNormalizedResidual => lnr_test(res, &self.omega, confidence),
        }
    }
}
