use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Companion-form state-space realisation of a stationary GP prior:
/// `ds = F s dt + L dβ`, `E[dβ dβ^T] = Qc dt`, `eta = H s`.
pub trait LatentKernel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn drift(&self) -> DMatrix<f64>;
    fn noise_gain(&self) -> DMatrix<f64>;
    /// White-noise spectral density `Qc`.
    fn diffusion(&self) -> f64;
    fn output(&self) -> DMatrix<f64>;
    /// Stationary covariance of the kernel state.
    fn stationary_covariance(&self) -> DMatrix<f64>;
}

/// Per-mode Matérn-1/2 hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub amplitude: Vec<f64>,
    pub length_scale: Vec<f64>,
}

impl GpHyperparams {
    pub fn uniform(modes: usize, amplitude: f64, length_scale: f64) -> Self {
        GpHyperparams {
            amplitude: vec![amplitude; modes],
            length_scale: vec![length_scale; modes],
        }
    }

    pub fn modes(&self) -> usize {
        self.amplitude.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude.len() != self.length_scale.len() || self.amplitude.is_empty() {
            return Err(invalid("hyperparameter lists must be non-empty and equally long"));
        }
        if self
            .amplitude
            .iter()
            .chain(&self.length_scale)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(invalid("GP amplitudes and length-scales must be positive"));
        }
        Ok(())
    }

    /// `[ln alpha_1..m, ln l_1..m]`
    pub fn to_log(&self) -> Vec<f64> {
        self.amplitude
            .iter()
            .chain(&self.length_scale)
            .map(|v| v.ln())
            .collect()
    }

    pub fn from_log(x: &[f64]) -> Self {
        let m = x.len() / 2;
        GpHyperparams {
            amplitude: x[..m].iter().map(|v| v.exp()).collect(),
            length_scale: x[m..2 * m].iter().map(|v| v.exp()).collect(),
        }
    }

    pub fn kernels(&self) -> Vec<Matern12> {
        self.amplitude
            .iter()
            .zip(&self.length_scale)
            .map(|(&amplitude, &length_scale)| Matern12 {
                amplitude,
                length_scale,
            })
            .collect()
    }
}

/// Exponential kernel `alpha^2 exp(-|tau| / l)`, an Ornstein-Uhlenbeck process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matern12 {
    pub amplitude: f64,
    pub length_scale: f64,
}

/// OU drift and diffusion `(-1/l, 2 alpha^2 / l)` of a Matérn-1/2 prior.
pub fn ou_block(amplitude: f64, length_scale: f64) -> Result<(f64, f64)> {
    if !(amplitude > 0.0 && length_scale > 0.0) {
        return Err(invalid(format!(
            "OU block needs positive hyperparameters, got alpha={amplitude}, l={length_scale}"
        )));
    }
    Ok((
        -1.0 / length_scale,
        2.0 * amplitude * amplitude / length_scale,
    ))
}

/// `S(omega) = 2 alpha^2 l / (1 + (l omega)^2)`
pub fn matern12_spectral_density(amplitude: f64, length_scale: f64, omega: f64) -> f64 {
    2.0 * amplitude * amplitude * length_scale / (1.0 + (length_scale * omega).powi(2))
}

impl LatentKernel for Matern12 {
    fn state_dim(&self) -> usize {
        1
    }

    fn drift(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -1.0 / self.length_scale)
    }

    fn noise_gain(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn diffusion(&self) -> f64 {
        2.0 * self.amplitude * self.amplitude / self.length_scale
    }

    fn output(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn stationary_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.amplitude * self.amplitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn unit_block() {
        let (f, q) = ou_block(1.0, 1.0).unwrap();
        assert_eq!((f, q), (-1.0, 2.0));
        assert_eq!(q / (-2.0 * f), 1.0);
        assert!(ou_block(0.0, 1.0).is_err());
        assert!(ou_block(1.0, -1.0).is_err());
    }

    #[test]
    fn stationary_variance_is_amplitude_squared() {
        for (a, l) in [(3.0, 0.2), (1e4, 0.1), (0.5, 7.0)] {
            let (f, q) = ou_block(a, l).unwrap();
            assert!((q / (-2.0 * f) / (a * a) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_density_at_zero() {
        assert!((matern12_spectral_density(3.0, 0.5, 0.0) - 2.0 * 9.0 * 0.5).abs() < 1e-14);
    }

    #[test]
    fn simulated_autocovariance_at_one_length_scale() {
        // exact OU transition on a fine grid
        let (alpha, ell, dt): (f64, f64, f64) = (2.0, 0.05, 0.005);
        let a = (-dt / ell).exp();
        let sd = alpha * (1.0 - a * a).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400_000;
        let mut x = vec![0.0; n];
        let z0: f64 = StandardNormal.sample(&mut rng);
        x[0] = alpha * z0;
        for k in 1..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[k] = a * x[k - 1] + sd * z;
        }
        let lag = (ell / dt).round() as usize;
        let cov = x.iter().zip(&x[lag..]).map(|(u, v)| u * v).sum::<f64>() / (n - lag) as f64;
        let expected = alpha * alpha * (-1f64).exp();
        assert!((cov / expected - 1.0).abs() < 0.08, "{cov} vs {expected}");
    }

    #[test]
    fn log_round_trip() {
        let th = GpHyperparams {
            amplitude: vec![2.0, 30.0],
            length_scale: vec![0.1, 0.7],
        };
        let back = GpHyperparams::from_log(&th.to_log());
        for (a, b) in th.to_log().iter().zip(back.to_log()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
