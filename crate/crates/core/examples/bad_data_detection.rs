//! Chi-square and largest-normalized-residual tests on clean data, then on
//! the same data with one meter grossly wrong.

use gridfdi::cases;
use gridfdi::detection::{BadDataDetector, DetectionMethod};
use gridfdi::estimator::{MeasurementSet, WeightModel, WlsEstimator};
use gridfdi::grid::build_h_matrix;
use nalgebra::DVector;

fn main() -> gridfdi::Result<()> {
    let (net, meters) = cases::five_bus_grid()?;
    let h = build_h_matrix(&net, &meters)?;
    let est = WlsEstimator::new(&h, &WeightModel::new(&meters.sigmas())?)?;
    let detector = BadDataDetector::new(&est);

    let clean = MeasurementSet::from_slice(&cases::FIVE_BUS_MEASUREMENTS)?;
    let mut spike = DVector::zeros(h.m());
    spike[2] = 0.5; // 50 sigma on the 2-4 meter
    let corrupted = clean.perturbed(&spike)?;

    for (label, z) in [("clean", &clean), ("gross error", &corrupted)] {
        let res = est.estimate(z)?;
        for method in [
            DetectionMethod::ChiSquare,
            DetectionMethod::LargestNormalizedResidual,
        ] {
            let r = detector.run(method, &res, 0.99)?;
            let suspect = r
                .suspect_meter
                .map(|i| format!(", suspect meter {}", i + 1));
            println!(
                "{label:>11} {:<10} stat {:>10.4} vs {:.4}: detected={}{}",
                r.method.to_string(),
                r.statistic,
                r.threshold,
                r.bad_data_detected,
                suspect.unwrap_or_default()
            );
        }
    }
    Ok(())
}
