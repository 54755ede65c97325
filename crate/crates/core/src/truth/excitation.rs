use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::structural::{DofInfo, DofKind, FeModel};

fn default_kind() -> DofKind {
    DofKind::Translation
}

/// One point load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadSpec {
    /// `amplitude * sin(omega t + phase)`
    Sinusoid {
        x: f64,
        #[serde(default = "default_kind")]
        dof: DofKind,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Gaussian white noise through a 4th-order Butterworth filter, scaled
    /// to an RMS of `scale`.
    BandLimited {
        x: f64,
        #[serde(default = "default_kind")]
        dof: DofKind,
        #[serde(default)]
        band_low_hz: f64,
        band_high_hz: f64,
        seed: u64,
        scale: f64,
    },
}

impl LoadSpec {
    pub fn position(&self) -> (f64, DofKind) {
        match *self {
            LoadSpec::Sinusoid { x, dof, .. } | LoadSpec::BandLimited { x, dof, .. } => (x, dof),
        }
    }

    fn series(&self, times: &[f64], dt: f64) -> Result<Vec<f64>> {
        match *self {
            LoadSpec::Sinusoid {
                amplitude,
                omega,
                phase,
                ..
            } => Ok(times
                .iter()
                .map(|t| amplitude * (omega * t + phase).sin())
                .collect()),
            LoadSpec::BandLimited {
                band_low_hz,
                band_high_hz,
                seed,
                scale,
                ..
            } => band_limited_noise(times.len(), dt, band_low_hz, band_high_hz, seed, scale),
        }
    }
}

/// Loads on a uniform grid `t_k = k dt`, `k = 0..duration/dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSpec {
    pub loads: Vec<LoadSpec>,
    pub duration: f64,
    pub dt: f64,
}

impl ExcitationSpec {
    pub fn steps(&self) -> Result<usize> {
        if !(self.duration > 0.0 && self.dt > 0.0) {
            return Err(invalid("duration and dt must be positive"));
        }
        let ratio = self.duration / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) || n < 1.0 {
            return Err(invalid(format!(
                "duration {} is not an integer multiple of dt {}",
                self.duration, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((0..self.steps()?).map(|k| k as f64 * self.dt).collect())
    }

    /// Scales every amplitude by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for load in &mut out.loads {
            match load {
                LoadSpec::Sinusoid { amplitude, .. } => *amplitude *= factor,
                LoadSpec::BandLimited { scale, .. } => *scale *= factor,
            }
        }
        out
    }

    /// Physical force history, one column per sample.
    pub fn force_series(&self, model: &FeModel) -> Result<DMatrix<f64>> {
        self.force_on_dofs(&model.dofs)
    }

    /// Force history on an explicit DOF list; each load snaps to the
    /// nearest DOF of its kind within half a node spacing.
    pub fn force_on_dofs(&self, dofs: &[DofInfo]) -> Result<DMatrix<f64>> {
        let times = self.times()?;
        let tol = 0.5 * node_spacing(dofs);
        let mut force = DMatrix::zeros(dofs.len(), times.len());
        for load in &self.loads {
            let (x, kind) = load.position();
            let dof = dofs
                .iter()
                .enumerate()
                .filter(|(_, d)| d.kind == kind && (d.x - x).abs() <= tol)
                .min_by(|a, b| (a.1.x - x).abs().total_cmp(&(b.1.x - x).abs()))
                .map(|(i, _)| i)
                .ok_or_else(|| invalid(format!("no {kind:?} DOF near x = {x} for a load")))?;
            for (k, v) in load.series(&times, self.dt)?.into_iter().enumerate() {
                force[(dof, k)] += v;
            }
        }
        Ok(force)
    }
}

fn node_spacing(dofs: &[DofInfo]) -> f64 {
    let mut xs: Vec<f64> = dofs.iter().map(|d| d.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    xs.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Second-order section `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Clone, Copy, Debug)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn filter(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + s1;
            s1 = self.b[1] * *v - self.a[0] * y + s2;
            s2 = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }
}

/// Bilinear-transform sections of a 4th-order Butterworth filter.
fn butterworth4(cutoff_hz: f64, fs: f64, highpass: bool) -> [Biquad; 2] {
    let k = (std::f64::consts::PI * cutoff_hz / fs).tan();
    let qs = [
        1.0 / (2.0 * (std::f64::consts::PI / 8.0).cos()),
        1.0 / (2.0 * (3.0 * std::f64::consts::PI / 8.0).cos()),
    ];
    qs.map(|q| {
        let norm = 1.0 / (1.0 + k / q + k * k);
        let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
        let b = if highpass {
            [norm, -2.0 * norm, norm]
        } else {
            let g = k * k * norm;
            [g, 2.0 * g, g]
        };
        Biquad { b, a }
    })
}

fn band_limited_noise(
    n: usize,
    dt: f64,
    low_hz: f64,
    high_hz: f64,
    seed: u64,
    scale: f64,
) -> Result<Vec<f64>> {
    let fs = 1.0 / dt;
    if !(high_hz > 0.0 && high_hz < 0.5 * fs && low_hz >= 0.0 && low_hz < high_hz) {
        return Err(invalid(format!(
            "band [{low_hz}, {high_hz}] Hz must lie below Nyquist {} Hz",
            0.5 * fs
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    for s in butterworth4(high_hz, fs, false) {
        s.filter(&mut x);
    }
    if low_hz > 0.0 {
        for s in butterworth4(low_hz, fs, true) {
            s.filter(&mut x);
        }
    }
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms == 0.0 || !rms.is_finite() {
        return Err(Error::NumericalFailure("band-limited noise has zero power".into()));
    }
    Ok(x.into_iter().map(|v| v * scale / rms).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{assemble_euler_bernoulli, BeamProperties, Boundary};

    fn gain(sections: &[Biquad], f: f64, fs: f64) -> f64 {
        let w = std::f64::consts::TAU * f / fs;
        let z1 = rustfft::num_complex::Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
                let den = 1.0 + s.a[0] * z1 + s.a[1] * z2;
                (num / den).norm()
            })
            .product()
    }

    #[test]
    fn butterworth_response() {
        let fs = 1000.0;
        let lp = butterworth4(30.0, fs, false);
        assert!((gain(&lp, 0.0, fs) - 1.0).abs() < 1e-12);
        assert!((gain(&lp, 30.0, fs) - 0.5f64.sqrt()).abs() < 1e-9);
        // analog prototype with prewarped frequency
        let warp = |f: f64| (std::f64::consts::PI * f / fs).tan();
        let expected = 1.0 / (1.0 + (warp(90.0) / warp(30.0)).powi(8)).sqrt();
        assert!((gain(&lp, 90.0, fs) / expected - 1.0).abs() < 1e-9);
        let hp = butterworth4(5.0, fs, true);
        assert!(gain(&hp, 0.0, fs) < 1e-12);
        assert!((gain(&hp, 5.0, fs) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn band_limited_is_seeded_and_scaled() {
        let a = band_limited_noise(4000, 1e-3, 0.0, 30.0, 7, 2.5).unwrap();
        let b = band_limited_noise(4000, 1e-3, 0.0, 30.0, 7, 2.5).unwrap();
        let c = band_limited_noise(4000, 1e-3, 0.0, 30.0, 8, 2.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let rms = (a.iter().map(|v| v * v).sum::<f64>() / 4000.0).sqrt();
        assert!((rms - 2.5).abs() < 1e-12);
        assert!(band_limited_noise(10, 1e-3, 0.0, 600.0, 1, 1.0).is_err());
    }

    #[test]
    fn grid_and_placement() {
        let model =
            assemble_euler_bernoulli(&BeamProperties::reference(), 10, &Boundary::SimplySupported)
                .unwrap();
        let exc = ExcitationSpec {
            loads: vec![LoadSpec::Sinusoid {
                x: 2.0,
                dof: DofKind::Translation,
                amplitude: 3.0,
                omega: 10.0,
                phase: 0.5,
            }],
            duration: 0.1,
            dt: 1e-3,
        };
        let f = exc.force_series(&model).unwrap();
        assert_eq!(f.ncols(), 100);
        let dof = model.find_dof(2.0, DofKind::Translation, 1e-9).unwrap();
        assert!((f[(dof, 7)] - 3.0 * (10.0 * 0.007f64 + 0.5).sin()).abs() < 1e-14);
        assert_eq!(f.column(7).iter().filter(|v| **v != 0.0).count(), 1);
        let bad = ExcitationSpec {
            duration: 0.10005,
            ..exc.clone()
        };
        assert!(bad.steps().is_err());
        let off = ExcitationSpec {
            loads: vec![LoadSpec::Sinusoid {
                x: 42.0,
                dof: DofKind::Translation,
                amplitude: 1.0,
                omega: 1.0,
                phase: 0.0,
            }],
            ..exc
        };
        assert!(off.force_series(&model).is_err());
    }
}
