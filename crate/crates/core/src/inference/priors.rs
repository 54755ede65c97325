use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::gp::GpHyperparams;

/// Student-t density with location `mu`, squared scale `v` and `nu`
/// degrees of freedom. At `nu = 1` the "variance" `v` has no moment
/// meaning and is read as the squared scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentT {
    pub mu: f64,
    pub v: f64,
    pub nu: f64,
}

impl StudentT {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let s = self.v.sqrt();
        let z = (x - self.mu) / s;
        ln_gamma(0.5 * (self.nu + 1.0))
            - ln_gamma(0.5 * self.nu)
            - 0.5 * (self.nu * std::f64::consts::PI).ln()
            - s.ln()
            - 0.5 * (self.nu + 1.0) * ln_1p_square(z / self.nu.sqrt())
    }
}

/// `ln(1 + t^2)` without overflow for huge `t`.
fn ln_1p_square(t: f64) -> f64 {
    if t.abs() > 1e150 {
        2.0 * t.abs().ln()
    } else {
        (t * t).ln_1p()
    }
}

/// Independent priors shared by every mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub amplitude: StudentT,
    pub length_scale: StudentT,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            amplitude: StudentT {
                mu: 1e4,
                v: 1e2,
                nu: 1.0,
            },
            length_scale: StudentT {
                mu: 0.1,
                v: 1e-2,
                nu: 1.0,
            },
        }
    }
}

impl PriorSpec {
    pub fn ln_prior(&self, theta: &GpHyperparams) -> f64 {
        theta
            .amplitude
            .iter()
            .map(|a| self.amplitude.ln_pdf(*a))
            .chain(theta.length_scale.iter().map(|l| self.length_scale.ln_pdf(*l)))
            .sum()
    }

    pub fn modes(&self, m: usize) -> GpHyperparams {
        GpHyperparams::uniform(m, self.amplitude.mu, self.length_scale.mu)
    }
}
