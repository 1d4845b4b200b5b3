//! Stealth false-data-injection attacks.
//!
//! Any perturbation in the column space of H, `a = H c`, shifts the WLS
//! estimate by exactly `c` and leaves the residual vector untouched, so
//! every residual-based detector gives the same verdict on `z + a` as on
//! `z`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::detection::{BadDataDetector, DetectionMethod};
use crate::error::{Error, Result};
use crate::estimator::{residual_norm, MeasurementSet, WeightModel, WlsEstimator};
use crate::grid::MeasurementMatrix;
use crate::linalg;

/// Entries of `a` at or below this magnitude count as structurally zero.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector {
    /// Additive measurement perturbation.
    pub a: DVector<f64>,
    /// State shift that generates `a`.
    pub c: DVector<f64>,
    /// Meters (0-based) where `a` is nonzero.
    pub support: BTreeSet<usize>,
}

impl AttackVector {
    fn new(a: DVector<f64>, c: DVector<f64>) -> Self {
        let support = a
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > SUPPORT_TOL)
            .map(|(i, _)| i)
            .collect();
        Self { a, c, support }
    }

    pub fn is_trivial(&self) -> bool {
        self.support.is_empty()
    }
}

/// Hat matrix `P = H (H^T H)^-1 H^T` and its complement `B = P - I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrices {
    pub p: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

pub fn projection_matrices(h: &MeasurementMatrix) -> Result<ProjectionMatrices> {
    let hm = h.matrix();
    let gram = linalg::cholesky_checked(hm.transpose() * hm).ok_or(Error::SingularGram)?;
    let p = hm * gram.solve(&hm.transpose());
    let p = (&p + p.transpose()) * 0.5;
    let b = &p - DMatrix::identity(h.m(), h.m());
    Ok(ProjectionMatrices { p, b })
}

pub fn attack_from_c(h: &MeasurementMatrix, c: &DVector<f64>) -> Result<AttackVector> {
    if c.len() != h.n() {
        return Err(Error::dims("state shift length", h.n(), c.len()));
    }
    let mut a = h.matrix() * c;
    for v in a.iter_mut() {
        if v.abs() <= SUPPORT_TOL {
            *v = 0.0;
        }
    }
    Ok(AttackVector::new(a, c.clone()))
}

/// Random attack confined to the `controlled` meters, scaled to `‖a‖ = magnitude`.
///
/// `c` is a random combination of the null space of the rows of H the
/// attacker does not control; such a `c` exists whenever fewer than n rows
/// are uncontrolled, i.e. `k >= m - n + 1`.
pub fn random_constrained_attack(
    h: &MeasurementMatrix,
    controlled: &BTreeSet<usize>,
    seed: u64,
    magnitude: f64,
) -> Result<AttackVector> {
    let m = h.m();
    if controlled.is_empty() {
        return Err(Error::validation("attacker controls no meters"));
    }
    if let Some(&bad) = controlled.iter().find(|&&i| i >= m) {
        return Err(Error::validation(format!(
            "controlled meter {} does not exist ({} meters)",
            bad + 1,
            m
        )));
    }
    if !(magnitude > 0.0) || !magnitude.is_finite() {
        return Err(Error::validation(format!(
            "attack magnitude must be positive, got {magnitude}"
        )));
    }
    let hm = h.matrix();
    let uncontrolled: Vec<usize> = (0..m).filter(|i| !controlled.contains(i)).collect();
    let sub = hm.select_rows(uncontrolled.iter());
    let basis = linalg::null_space(&sub);
    let infeasible = || Error::InfeasibleSupport(controlled.iter().copied().collect());
    if basis.ncols() == 0 {
        return Err(infeasible());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = DVector::from_fn(basis.ncols(), |_, _| StandardNormal.sample(&mut rng));
    let c = &basis * weights;
    let mut a = hm * &c;
    let norm = a.norm();
    if norm <= SUPPORT_TOL * hm.norm().max(1.0) * c.norm() {
        // the null space of the uncontrolled rows lies inside ker(H)
        return Err(infeasible());
    }
    let scale = magnitude / norm;
    a *= scale;
    let c = c * scale;
    for &i in &uncontrolled {
        a[i] = 0.0;
    }
    for v in a.iter_mut() {
        if v.abs() <= SUPPORT_TOL {
            *v = 0.0;
        }
    }
    Ok(AttackVector::new(a, c))
}

/// How the unpinned entries of a targeted state shift are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Completion {
    /// Free entries minimize `‖H c‖`: the smallest disturbance to the
    /// meter readings that realises the pinned angles.
    #[default]
    MinimumMeasurementChange,
    /// Free entries are zero, the minimum-norm `c`.
    MinimumStateShift,
}

/// Attack whose state shift agrees exactly with the pinned `(state index, value)` entries.
pub fn targeted_attack(
    h: &MeasurementMatrix,
    pins: &[(usize, f64)],
    completion: Completion,
) -> Result<AttackVector> {
    let n = h.n();
    if pins.is_empty() {
        return Err(Error::validation(
            "targeted attack needs at least one pinned entry",
        ));
    }
    let mut c = DVector::zeros(n);
    let mut pinned = vec![false; n];
    for &(idx, value) in pins {
        if idx >= n {
            return Err(Error::dims("pinned state index bound", n, idx + 1));
        }
        if pinned[idx] {
            return Err(Error::validation(format!("state {} pinned twice", idx + 1)));
        }
        if !value.is_finite() {
            return Err(Error::validation("pinned value is not finite"));
        }
        pinned[idx] = true;
        c[idx] = value;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
    if completion == Completion::MinimumMeasurementChange && !free.is_empty() {
        let hm = h.matrix();
        let h_free = hm.select_columns(free.iter());
        let target = -(hm * &c);
        let svd = h_free.svd(true, true);
        let eps = linalg::RANK_TOL * svd.singular_values.max();
        let c_free = svd
            .solve(&target, eps)
            .map_err(|e| Error::validation(format!("least-squares completion failed: {e}")))?;
        for (k, &i) in free.iter().enumerate() {
            c[i] = c_free[k];
        }
    }
    attack_from_c(h, &c)
}

/// True when adding the attack leaves the weighted residual norm unchanged
/// and both detectors return the same verdicts as on the clean data.
pub fn verify_stealth(
    z: &MeasurementSet,
    atk: &AttackVector,
    h: &MeasurementMatrix,
    w: &WeightModel,
    confidence: f64,
) -> Result<bool> {
    let est = WlsEstimator::new(h, w)?;
    let detector = BadDataDetector::new(&est);
    let clean = est.estimate(z)?;
    let attacked = est.estimate(&z.perturbed(&atk.a)?)?;
    let (r0, r1) = (residual_norm(&clean), residual_norm(&attacked));
    if (r0 - r1).abs() > 1e-9 * (1.0 + r0) {
        return Ok(false);
    }
    for method in [
        DetectionMethod::ChiSquare,
        DetectionMethod::LargestNormalizedResidual,
    ] {
        let before = detector.run(method, &clean, confidence)?;
        let after = detector.run(method, &attacked, confidence)?;
        if before.bad_data_detected != after.bad_data_detected {
            return Ok(false);
        }
    }
    Ok(true)
}
