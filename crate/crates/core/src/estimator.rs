//! DC weighted-least-squares state estimation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::MeasurementMatrix;
use crate::linalg;

/// Bus voltage angles in radians, slack excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn from_slice(angles: &[f64]) -> Self {
        Self(DVector::from_column_slice(angles))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Metered real-power branch flows, per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet(DVector<f64>);

impl MeasurementSet {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "measurement {} is not finite",
                i + 1
            )));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `z + a`.
    pub fn perturbed(&self, a: &DVector<f64>) -> Result<Self> {
        if a.len() != self.len() {
            return Err(Error::dims("perturbation length", self.len(), a.len()));
        }
        Self::new(&self.0 + a)
    }
}

/// Meter standard deviations; the weight of meter i is `1 / sigma_i^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    sigmas: DVector<f64>,
}

impl WeightModel {
    pub fn new(sigmas: &[f64]) -> Result<Self> {
        if let Some(i) = sigmas.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::validation(format!(
                "sigma of meter {} must be positive, got {}",
                i + 1,
                sigmas[i]
            )));
        }
        Ok(Self {
            sigmas: DVector::from_column_slice(sigmas),
        })
    }

    pub fn uniform(m: usize, sigma: f64) -> Result<Self> {
        Self::new(&vec![sigma; m])
    }

    pub fn sigmas(&self) -> &DVector<f64> {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// Diagonal of W = R^-1.
    pub fn weights(&self) -> DVector<f64> {
        self.sigmas.map(|s| 1.0 / (s * s))
    }

    /// Diagonal of R.
    pub fn variances(&self) -> DVector<f64> {
        self.sigmas.map(|s| s * s)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new((self.sigmas.clone() * factor).as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub state: StateVector,
    /// `H x_hat`.
    pub fitted: DVector<f64>,
    /// `z - H x_hat`.
    pub residual: DVector<f64>,
    /// Weighted residual sum of squares J.
    pub objective: f64,
    /// Residual divided elementwise by the meter sigmas.
    pub weighted_residual: DVector<f64>,
}

/// WLS estimator with a factored gain matrix, reusable across many
/// measurement vectors for the same H and weights.
#[derive(Debug, Clone)]
pub struct WlsEstimator {
    h: MeasurementMatrix,
    weights: WeightModel,
    gain: Cholesky<f64, Dyn>,
}

impl WlsEstimator {
    pub fn new(h: &MeasurementMatrix, w: &WeightModel) -> Result<Self> {
        if w.len() != h.m() {
            return Err(Error::dims("weight count", h.m(), w.len()));
        }
        if h.n() == 0 {
            return Err(Error::SingularGainMatrix);
        }
        let hm = h.matrix();
        let weighted = DMatrix::from_diagonal(&w.weights()) * hm;
        let gain =
            linalg::cholesky_checked(hm.transpose() * weighted).ok_or(Error::SingularGainMatrix)?;
        Ok(Self {
            h: h.clone(),
            weights: w.clone(),
            gain,
        })
    }

    pub fn h(&self) -> &MeasurementMatrix {
        &self.h
    }

    pub fn weights(&self) -> &WeightModel {
        &self.weights
    }

    /// `G^-1 rhs` for the gain matrix `G = H^T R^-1 H`.
    pub fn gain_solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.gain.solve(rhs)
    }

    /// Solves `(H^T R^-1 H) x = H^T R^-1 z`.
    pub fn estimate(&self, z: &MeasurementSet) -> Result<EstimationResult> {
        let hm = self.h.matrix();
        if z.len() != hm.nrows() {
            return Err(Error::dims("measurement count", hm.nrows(), z.len()));
        }
        let wz = z.values().component_mul(&self.weights.weights());
        let state = self.gain.solve(&(hm.transpose() * wz));
        let fitted = hm * &state;
        let residual = z.values() - &fitted;
        let weighted_residual = residual.component_div(self.weights.sigmas());
        let objective = weighted_residual.norm_squared();
        Ok(EstimationResult {
            state: StateVector(state),
            fitted,
            residual,
            objective,
            weighted_residual,
        })
    }
}

pub fn wls_estimate(
    h: &MeasurementMatrix,
    z: &MeasurementSet,
    w: &WeightModel,
) -> Result<EstimationResult> {
    if z.len() != h.m() {
        return Err(Error::dims("measurement count", h.m(), z.len()));
    }
    WlsEstimator::new(h, w)?.estimate(z)
}

/// `z = H x_true + e` with independent Gaussian errors of the given sigmas.
///
/// Zero sigmas are allowed and give noiseless readings.
pub fn simulate_measurements(
    h: &MeasurementMatrix,
    x_true: &StateVector,
    sigmas: &[f64],
    seed: u64,
) -> Result<MeasurementSet> {
    if x_true.len() != h.n() {
        return Err(Error::dims("state length", h.n(), x_true.len()));
    }
    if sigmas.len() != h.m() {
        return Err(Error::dims("sigma count", h.m(), sigmas.len()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::validation(format!("invalid noise sigma {s}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = h.matrix() * &x_true.0;
    for (zi, &s) in z.iter_mut().zip(sigmas) {
        let e = unit.sample(&mut rng);
        *zi += s * e;
    }
    MeasurementSet::new(z)
}

/// L2 norm of the weighted residual; equal to `sqrt(objective)`.
pub fn residual_norm(res: &EstimationResult) -> f64 {
    res.weighted_residual.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn five_bus() -> (MeasurementMatrix, MeasurementSet, WeightModel) {
        let (net, meters) = cases::five_bus_grid().unwrap();
        let h = crate::grid::build_h_matrix(&net, &meters).unwrap();
        let z = MeasurementSet::from_slice(&cases::FIVE_BUS_MEASUREMENTS).unwrap();
        let w = WeightModel::new(&meters.sigmas()).unwrap();
        (h, z, w)
    }

    /// Independent route: normal equations solved by Gaussian elimination
    /// with partial pivoting on plain arrays.
    fn normal_equation_oracle(h: &DMatrix<f64>, z: &[f64], sigma: &[f64]) -> Vec<f64> {
        let (m, n) = h.shape();
        let mut a = vec![vec![0.0; n + 1]; n];
        for r in 0..n {
            for c in 0..n {
                a[r][c] = (0..m)
                    .map(|i| h[(i, r)] * h[(i, c)] / (sigma[i] * sigma[i]))
                    .sum();
            }
            a[r][n] = (0..m)
                .map(|i| h[(i, r)] * z[i] / (sigma[i] * sigma[i]))
                .sum();
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..n).map(|r| a[r][n] / a[r][r]).collect()
    }

    // Frozen from an exact rational solve of the normal equations on the
    // data with uniform sigma = 0.01; J = 1611/12227.
    const FIVE_BUS_STATE: [f64; 4] = [
        -666_723.0 / 24_454_000.0,
        48_303.0 / 6_113_500.0,
        -897_411.0 / 24_454_000.0,
        -215_103.0 / 4_890_800.0,
    ];
    const FIVE_BUS_OBJECTIVE: f64 = 1611.0 / 12227.0;

    #[test]
    fn five_bus_matches_oracle() {
        let (h, z, w) = five_bus();
        let est = wls_estimate(&h, &z, &w).unwrap();
        let oracle = normal_equation_oracle(h.matrix(), &cases::FIVE_BUS_MEASUREMENTS, &[0.01; 6]);
        for i in 0..4 {
            assert!((est.state.0[i] - oracle[i]).abs() < 1e-12);
            assert!((est.state.0[i] - FIVE_BUS_STATE[i]).abs() < 1e-12);
        }
        assert!((est.objective - FIVE_BUS_OBJECTIVE).abs() < 1e-9);
        assert!((residual_norm(&est) - FIVE_BUS_OBJECTIVE.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn exact_data_is_a_fixed_point() {
        let (h, _, w) = five_bus();
        let x = StateVector::from_slice(&[0.01, -0.02, 0.03, -0.04]);
        let z = simulate_measurements(&h, &x, &[0.0; 6], 1).unwrap();
        let est = wls_estimate(&h, &z, &w).unwrap();
        assert!((&est.state.0 - &x.0).amax() < 1e-10);
        assert!(est.objective < 1e-10);
    }

    #[test]
    fn square_system() {
        let h = MeasurementMatrix::from_matrix(DMatrix::from_element(1, 1, -1.0));
        let z = MeasurementSet::from_slice(&[0.5]).unwrap();
        let w = WeightModel::new(&[1.0]).unwrap();
        let est = wls_estimate(&h, &z, &w).unwrap();
        assert!((est.state.0[0] + 0.5).abs() < 1e-15);
        assert!(est.residual[0].abs() < 1e-15);
    }

    #[test]
    fn residual_norm_pythagorean() {
        let h = MeasurementMatrix::from_matrix(DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]));
        let z = MeasurementSet::from_slice(&[0.0, 3.0, 4.0]).unwrap();
        let w = WeightModel::uniform(3, 1.0).unwrap();
        let est = wls_estimate(&h, &z, &w).unwrap();
        assert!((residual_norm(&est) - 5.0).abs() < 1e-12);
        let zero = MeasurementSet::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(residual_norm(&wls_estimate(&h, &zero, &w).unwrap()), 0.0);
    }

    #[test]
    fn orthogonality_idempotence_and_scale() {
        let (h, z, w) = five_bus();
        let est = wls_estimate(&h, &z, &w).unwrap();
        let ortho = h.matrix().transpose() * est.residual.component_mul(&w.weights());
        assert!(ortho.amax() <= 1e-8, "{ortho}");

        let refit = MeasurementSet::new(est.fitted.clone()).unwrap();
        let again = wls_estimate(&h, &refit, &w).unwrap();
        assert!((&again.state.0 - &est.state.0).amax() < 1e-10);

        let scaled = wls_estimate(&h, &z, &w.scaled(7.5).unwrap()).unwrap();
        assert!((&scaled.state.0 - &est.state.0).amax() < 1e-10);
    }

    #[test]
    fn errors() {
        let (h, z, _) = five_bus();
        let w5 = WeightModel::uniform(5, 0.01).unwrap();
        assert!(matches!(
            wls_estimate(&h, &z, &w5),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(WeightModel::new(&[0.01, 0.0]).is_err());

        let singular =
            MeasurementMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]));
        let z2 = MeasurementSet::from_slice(&[1.0, 2.0]).unwrap();
        let w2 = WeightModel::uniform(2, 1.0).unwrap();
        assert!(matches!(
            wls_estimate(&singular, &z2, &w2),
            Err(Error::SingularGainMatrix)
        ));
        assert!(MeasurementSet::from_slice(&[f64::NAN]).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let (h, _, _) = five_bus();
        let x = StateVector::from_slice(&FIVE_BUS_STATE);
        let a = simulate_measurements(&h, &x, &[0.01; 6], 42).unwrap();
        let b = simulate_measurements(&h, &x, &[0.01; 6], 42).unwrap();
        let c = simulate_measurements(&h, &x, &[0.01; 6], 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn simulated_noise_has_requested_spread() {
        let h = MeasurementMatrix::from_matrix(DMatrix::from_element(1, 1, 1.0));
        let x = StateVector::from_slice(&[0.0]);
        let draws: Vec<f64> = (0..10_000)
            .map(|seed| {
                simulate_measurements(&h, &x, &[0.01], seed)
                    .unwrap()
                    .values()[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 0.01).abs() < 0.0005, "sample sd {sd}");
    }
}
