use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mean over channels of `log10 |X(omega)|`, one-sided.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedSpectrum {
    /// rad/s
    pub omega: Vec<f64>,
    pub hz: Vec<f64>,
    pub log_magnitude: Vec<f64>,
}

/// Unnormalized forward FFT magnitudes of every bin, so that
/// `sum |X_k|^2 = N sum x_n^2`.
pub fn fft_magnitudes(x: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|c| c.norm()).collect()
}

fn detrend(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Averaged log-magnitude spectrum of channels x samples, rectangular window,
/// mean removed per channel.
pub fn averaged_log_fft(signals: &DMatrix<f64>, dt: f64) -> Result<AveragedSpectrum> {
    let n = signals.ncols();
    if n < 64 {
        return Err(invalid(format!("need at least 64 samples, got {n}")));
    }
    if signals.nrows() == 0 || !(dt > 0.0) {
        return Err(invalid("averaged_log_fft needs channels and a positive step"));
    }
    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let fft = FftPlanner::new().plan_fft_forward(n);
    for row in signals.row_iter() {
        let mut x: Vec<f64> = row.iter().copied().collect();
        detrend(&mut x);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm().max(f64::MIN_POSITIVE).log10();
        }
    }
    let channels = signals.nrows() as f64;
    let df = 1.0 / (n as f64 * dt);
    Ok(AveragedSpectrum {
        omega: (0..bins).map(|k| TAU * k as f64 * df).collect(),
        hz: (0..bins).map(|k| k as f64 * df).collect(),
        log_magnitude: acc.into_iter().map(|a| a / channels).collect(),
    })
}

/// As [`averaged_log_fft`] but checks that the time stamps are uniform.
pub fn averaged_log_fft_on_grid(times: &[f64], signals: &DMatrix<f64>) -> Result<AveragedSpectrum> {
    if times.len() != signals.ncols() || times.len() < 2 {
        return Err(invalid("time grid does not match the signals"));
    }
    let dt = times[1] - times[0];
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300))
    {
        return Err(invalid("non-uniform time grid"));
    }
    averaged_log_fft(signals, dt)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segments: usize,
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            segments: 8,
            overlap: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrfCurve {
    pub omega: Vec<f64>,
    /// Mean over outputs of `log10 |H1(omega)|`.
    pub mean_log: Vec<f64>,
}

/// Mean log-magnitude H1 frequency response `|P_xy| / P_xx` from one input
/// channel to every output channel, Welch-averaged with a Hann window, on
/// the band `[band.0, band.1]` rad/s.
pub fn frf_mean_log(
    input: &[f64],
    outputs: &DMatrix<f64>,
    dt: f64,
    band: (f64, f64),
    welch: WelchConfig,
) -> Result<FrfCurve> {
    let n = input.len();
    if outputs.ncols() != n || outputs.nrows() == 0 {
        return Err(invalid("input and output series lengths differ"));
    }
    if !(0.0..1.0).contains(&welch.overlap) || welch.segments == 0 {
        return Err(invalid("invalid Welch configuration"));
    }
    let k = welch.segments as f64;
    let seg = (n as f64 / (1.0 + (k - 1.0) * (1.0 - welch.overlap))).floor() as usize;
    if seg < 16 {
        return Err(invalid("series too short for the Welch segmentation"));
    }
    let hop = ((1.0 - welch.overlap) * seg as f64).round().max(1.0) as usize;
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let spectrum = |x: &[f64]| {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let mut buf: Vec<Complex64> = x
            .iter()
            .zip(&window)
            .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
            .collect();
        fft.process(&mut buf);
        buf
    };
    let bins = seg / 2 + 1;
    let mut pxx = vec![0.0; bins];
    let mut pxy = vec![vec![Complex64::new(0.0, 0.0); bins]; outputs.nrows()];
    let mut start = 0;
    while start + seg <= n {
        let xs = spectrum(&input[start..start + seg]);
        for b in 0..bins {
            pxx[b] += xs[b].norm_sqr();
        }
        for (j, row) in outputs.row_iter().enumerate() {
            let y: Vec<f64> = row.iter().skip(start).take(seg).copied().collect();
            let ys = spectrum(&y);
            for b in 0..bins {
                pxy[j][b] += xs[b].conj() * ys[b];
            }
        }
        start += hop;
    }
    let df = 1.0 / (seg as f64 * dt);
    let mut omega = Vec::new();
    let mut mean_log = Vec::new();
    for b in 0..bins {
        let w = TAU * b as f64 * df;
        if w < band.0 || w > band.1 || pxx[b] <= 0.0 {
            continue;
        }
        let avg = pxy
            .iter()
            .map(|p| (p[b].norm() / pxx[b]).max(f64::MIN_POSITIVE).log10())
            .sum::<f64>()
            / outputs.nrows() as f64;
        omega.push(w);
        mean_log.push(avg);
    }
    Ok(FrfCurve { omega, mean_log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn parseval() {
        let x: Vec<f64> = (0..256).map(|i| ((i * i) as f64 * 0.013).sin() + 0.2).collect();
        let mags = fft_magnitudes(&x);
        let lhs: f64 = mags.iter().map(|m| m * m).sum();
        let rhs = x.len() as f64 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((lhs / rhs - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sinusoid_peak_location() {
        let dt = 1e-3;
        let w0 = 2.0 * PI * 50.0;
        let sig = DMatrix::from_fn(3, 4000, |_, k| (w0 * k as f64 * dt).sin());
        let s = averaged_log_fft(&sig, dt).unwrap();
        let (imax, _) = s
            .log_magnitude
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let bin = TAU / (4000.0 * dt);
        assert!((s.omega[imax] - w0).abs() <= bin);
    }

    #[test]
    fn two_tone_average_keeps_both_peaks() {
        let dt = 1e-3;
        let (wa, wb) = (2.0 * PI * 40.0, 2.0 * PI * 130.0);
        let sig = DMatrix::from_fn(2, 2000, |c, k| {
            let t = k as f64 * dt;
            if c == 0 {
                (wa * t).sin()
            } else {
                (wb * t).sin()
            }
        });
        let s = averaged_log_fft(&sig, dt).unwrap();
        let median = {
            let mut v = s.log_magnitude.clone();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        for w in [wa, wb] {
            let i = s
                .omega
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - w).abs().total_cmp(&(b.1 - w).abs()))
                .unwrap()
                .0;
            assert!(s.log_magnitude[i] > median + 2.0);
        }
    }

    #[test]
    fn integer_shift_changes_only_phase_for_periodic_signals() {
        let dt = 1e-3;
        let n = 1000;
        // exactly periodic on the window so a circular shift is a time shift
        let f = |k: usize| (TAU * 7.0 * k as f64 / n as f64).sin() + 0.3 * (TAU * 31.0 * k as f64 / n as f64).cos();
        let a = DMatrix::from_fn(1, n, |_, k| f(k));
        let b = DMatrix::from_fn(1, n, |_, k| f(k + 5));
        let sa = averaged_log_fft(&a, dt).unwrap();
        let sb = averaged_log_fft(&b, dt).unwrap();
        for (x, y) in sa.log_magnitude.iter().zip(&sb.log_magnitude) {
            let (mx, my) = (10f64.powf(*x), 10f64.powf(*y));
            assert!((mx - my).abs() < 1e-10 * n as f64);
        }
    }

    #[test]
    fn rejects_short_or_irregular() {
        assert!(averaged_log_fft(&DMatrix::zeros(1, 10), 1e-3).is_err());
        let t = vec![0.0, 1.0, 2.5, 3.0];
        assert!(averaged_log_fft_on_grid(&t, &DMatrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn sdof_frf_off_resonance() {
        // x'' + 2 zeta w x' + w^2 x = f, integrated exactly for held input
        let (w, zeta, dt) = (2.0 * PI * 10.0, 0.05, 1e-3);
        let n = 1 << 16;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -2.0 * zeta * w]);
        let mut aug = DMatrix::zeros(3, 3);
        aug.view_mut((0, 0), (2, 2)).copy_from(&a);
        aug[(1, 2)] = 1.0;
        let e = crate::linalg::expm(&(aug * dt));
        let mut state = [0.0, 0.0];
        let mut x = DMatrix::zeros(1, n);
        for k in 0..n {
            x[(0, k)] = state[0];
            let s0 = e[(0, 0)] * state[0] + e[(0, 1)] * state[1] + e[(0, 2)] * f[k];
            let s1 = e[(1, 0)] * state[0] + e[(1, 1)] * state[1] + e[(1, 2)] * f[k];
            state = [s0, s1];
        }
        let curve = frf_mean_log(&f, &x, dt, (0.0, 2.0 * PI * 40.0), WelchConfig::default()).unwrap();
        for (om, lg) in curve.omega.iter().zip(&curve.mean_log) {
            let r = om / w;
            if (0.2..0.6).contains(&r) || (1.6..3.0).contains(&r) {
                let exact = 1.0 / ((w * w - om * om).powi(2) + (2.0 * zeta * w * om).powi(2)).sqrt();
                let est = 10f64.powf(*lg);
                assert!((est / exact - 1.0).abs() < 0.05, "omega {om}: {est} vs {exact}");
            }
        }
        let same = frf_mean_log(&f, &x, dt, (0.0, 100.0), WelchConfig::default()).unwrap();
        let again = frf_mean_log(&f, &x, dt, (0.0, 100.0), WelchConfig::default()).unwrap();
        assert_eq!(same, again);
    }
}
