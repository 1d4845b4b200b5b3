//! Inverse CDFs for the detector thresholds.

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "probability must lie in (0, 1), got {p}"
        )))
    }
}

/// Standard normal inverse CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step against the exact CDF.
pub fn gaussian_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };

    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Chi-square inverse CDF with `nu` degrees of freedom.
///
/// Closed form for two degrees of freedom; otherwise a Wilson-Hilferty
/// start refined by safeguarded Newton steps on the regularized
/// incomplete gamma function.
pub fn chi_square_quantile(p: f64, nu: u32) -> Result<f64> {
    check_probability(p)?;
    if nu == 0 {
        return Err(Error::validation(
            "chi-square needs at least one degree of freedom",
        ));
    }
    if nu == 2 {
        return Ok(-2.0 * (-p).ln_1p());
    }
    let k = f64::from(nu);
    let half = k / 2.0;
    let cdf = |x: f64| gamma_lr(half, x / 2.0);
    let ln_norm = -half * std::f64::consts::LN_2 - ln_gamma(half);
    let pdf = |x: f64| (ln_norm + (half - 1.0) * x.ln() - x / 2.0).exp();

    let z = gaussian_quantile(p)?;
    let h = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - h + z * h.sqrt()).powi(3)).max(1e-8);

    // bracket for bisection fallback
    let (mut lo, mut hi) = (0.0_f64, x.max(1.0));
    while cdf(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let f = cdf(x) - p;
        if f.abs() < 1e-14 {
            break;
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let d = pdf(x);
        let mut next = x - f / d;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_reference_points() {
        assert_eq!(gaussian_quantile(0.5).unwrap(), 0.0);
        assert!((gaussian_quantile(0.995).unwrap() - 2.575_829_303_548_901).abs() < 1e-9);
        assert!((gaussian_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((gaussian_quantile(0.01).unwrap() + 2.326_347_874_040_841).abs() < 1e-9);
        assert!((gaussian_quantile(1e-10).unwrap() + 6.361_340_902_404_056).abs() < 1e-7);
    }

    #[test]
    fn gaussian_symmetry() {
        for p in [0.001, 0.02, 0.2, 0.4] {
            let lo = gaussian_quantile(p).unwrap();
            let hi = gaussian_quantile(1.0 - p).unwrap();
            assert!((lo + hi).abs() < 1e-9);
        }
    }

    #[test]
    fn chi_square_closed_forms() {
        assert!((chi_square_quantile(0.99, 2).unwrap() - 9.210_340_371_976_18).abs() < 1e-9);
        assert!((chi_square_quantile(0.5, 2).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let z = gaussian_quantile(0.995).unwrap();
        assert!((chi_square_quantile(0.99, 1).unwrap() - z * z).abs() < 1e-6);
    }

    #[test]
    fn chi_square_inverts_cdf() {
        for nu in [1, 3, 4, 7, 20, 100] {
            for p in [0.01, 0.5, 0.9, 0.99, 0.999] {
                let x = chi_square_quantile(p, nu).unwrap();
                let back = gamma_lr(f64::from(nu) / 2.0, x / 2.0);
                assert!((back - p).abs() < 1e-6, "nu={nu} p={p} x={x} back={back}");
            }
        }
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(gaussian_quantile(0.0).is_err());
        assert!(gaussian_quantile(1.0).is_err());
        assert!(chi_square_quantile(1.5, 2).is_err());
        assert!(chi_square_quantile(0.5, 0).is_err());
    }
}
