//! Error metrics and spectral diagnostics.

mod spectra;

pub use spectra::{
    averaged_log_fft, averaged_log_fft_on_grid, fft_magnitudes, frf_mean_log, AveragedSpectrum,
    FrfCurve, WelchConfig,
};

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Variance-normalized mean squared error, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmseReport {
    pub percent: f64,
    /// Components that entered the average.
    pub components: usize,
    pub samples: usize,
    /// Population variance of each truth component (zero for excluded ones).
    pub variances: Vec<f64>,
}

/// NMSE between `truth` and `estimate`, both components x samples.
///
/// `e = 100 / (n N_t) * sum_i sum_k (p_i - p_hat_i)^2 / var(p_i)` with the
/// population variance of the truth component. Zero-variance components are
/// skipped.
pub fn nmse_report(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<NmseReport> {
    if truth.shape() != estimate.shape() {
        return Err(invalid(format!(
            "nmse shapes differ: {:?} vs {:?}",
            truth.shape(),
            estimate.shape()
        )));
    }
    let nt = truth.ncols();
    if nt == 0 {
        return Err(Error::UndefinedMetric("no samples".into()));
    }
    let mut total = 0.0;
    let mut used = 0;
    let mut variances = Vec::with_capacity(truth.nrows());
    for (row_t, row_e) in truth.row_iter().zip(estimate.row_iter()) {
        let mean = row_t.sum() / nt as f64;
        let var = row_t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nt as f64;
        variances.push(var);
        let scale = row_t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if var <= f64::EPSILON * f64::EPSILON * scale * scale || var == 0.0 {
            continue;
        }
        let sq: f64 = row_t
            .iter()
            .zip(row_e.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        total += sq / var;
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(
            "every truth component has zero variance".into(),
        ));
    }
    if used < truth.nrows() {
        warn!(
            "nmse: {} zero-variance component(s) excluded",
            truth.nrows() - used
        );
    }
    Ok(NmseReport {
        percent: 100.0 * total / (used as f64 * nt as f64),
        components: used,
        samples: nt,
        variances,
    })
}

pub fn nmse(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    nmse_report(truth, estimate).map(|r| r.percent)
}

/// Percentage reduction of `value` relative to `baseline`.
pub fn reduction_percent(baseline: f64, value: f64) -> f64 {
    100.0 * (1.0 - value / baseline)
}

/// Root mean square of each row.
pub fn row_rms(series: &DMatrix<f64>) -> Vec<f64> {
    let n = series.ncols().max(1) as f64;
    series
        .row_iter()
        .map(|r| (r.iter().map(|v| v * v).sum::<f64>() / n).sqrt())
        .collect()
}

/// Pearson correlation of two equal-length signals.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signals() -> DMatrix<f64> {
        DMatrix::from_fn(3, 200, |i, k| {
            ((k as f64) * 0.05 * (i + 1) as f64).sin() + 0.1 * i as f64
        })
    }

    #[test]
    fn identical_is_zero() {
        let p = signals();
        assert_eq!(nmse(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn mean_predictor_scores_hundred() {
        let p = signals();
        let mut mean = p.clone();
        for mut row in mean.row_iter_mut() {
            let m = row.sum() / row.len() as f64;
            row.fill(m);
        }
        assert!((nmse(&p, &mean).unwrap() - 100.0).abs() < 1e-10);
    }

    #[test]
    fn zero_variance_component_excluded() {
        let mut p = signals();
        p.row_mut(1).fill(2.0);
        let est = p.map(|v| v * 1.1);
        let r = nmse_report(&p, &est).unwrap();
        assert_eq!(r.components, 2);
        let flat = DMatrix::from_element(2, 10, 1.0);
        assert!(matches!(nmse(&flat, &flat), Err(Error::UndefinedMetric(_))));
    }

    proptest! {
        #[test]
        fn scale_invariant(a in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64], noise in 0.0..1.0f64) {
            let p = signals();
            let est = p.map(|v| v + noise * (v * 7.0).cos());
            let base = nmse(&p, &est).unwrap();
            let scaled = nmse(&(&p * a), &(&est * a)).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1e-12));
        }

        #[test]
        fn permutation_symmetric(shift in 1usize..3) {
            let p = signals();
            let est = p.map(|v| 0.9 * v + 0.01);
            let perm: Vec<usize> = (0..3).map(|i| (i + shift) % 3).collect();
            let pp = DMatrix::from_fn(3, p.ncols(), |i, k| p[(perm[i], k)]);
            let ep = DMatrix::from_fn(3, p.ncols(), |i, k| est[(perm[i], k)]);
            let a = nmse(&p, &est).unwrap();
            let b = nmse(&pp, &ep).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
            prop_assert!(a >= 0.0);
        }
    }
}
