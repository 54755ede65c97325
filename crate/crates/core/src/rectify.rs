//! Forward prediction with the learned latent forces in the loop:
//! `q'' + Xi q' + Omega^2 q + g(q, q') = p`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modal::ModalBasis;
use crate::surrogate::Surrogate;
use crate::truth::ode::rk4_step;

pub const DEFAULT_SUBSTEPS: usize = 10;
/// Divergence threshold as a multiple of the static response scale.
pub const DIVERGENCE_FACTOR: f64 = 1e9;
/// Widening of the training box, per side, before a state counts as
/// extrapolated.
pub const EXTRAPOLATION_MARGIN: f64 = 0.1;
/// Relative frequency mismatch above which mesh transfer warns.
pub const FREQUENCY_WARN_RELATIVE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct RectifiedModel {
    pub frequencies: Vec<f64>,
    /// `2 zeta_i omega_i`
    pub damping: Vec<f64>,
    pub surrogate: Surrogate,
}

#[derive(Clone, Debug)]
pub struct RectifiedPrediction {
    /// `m x N_t` on the sample grid, starting from rest at `t_0`.
    pub q: DMatrix<f64>,
    pub q_dot: DMatrix<f64>,
    /// Surrogate output along the predicted trajectory.
    pub eta: DMatrix<f64>,
    /// Share of samples whose state left the widened training box.
    pub extrapolation_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub steps: usize,
    pub substeps: usize,
    pub extrapolation_fraction: f64,
    pub max_abs_q: Vec<f64>,
}

impl RectifiedPrediction {
    pub fn summary(&self, substeps: usize) -> PredictionSummary {
        PredictionSummary {
            steps: self.q.ncols(),
            substeps,
            extrapolation_fraction: self.extrapolation_fraction,
            max_abs_q: self.q.row_iter().map(|r| r.amax()).collect(),
        }
    }
}

impl RectifiedModel {
    pub fn new(basis: &ModalBasis, surrogate: Surrogate) -> Result<Self> {
        surrogate.validate()?;
        if surrogate.modes() != basis.retained() {
            return Err(Error::IncompatibleSurrogate(format!(
                "surrogate expects {} modes, basis retains {}",
                surrogate.modes(),
                basis.retained()
            )));
        }
        Ok(RectifiedModel {
            frequencies: basis.frequencies.clone(),
            damping: basis.damping.clone(),
            surrogate,
        })
    }

    pub fn modes(&self) -> usize {
        self.frequencies.len()
    }

    fn rhs(&self, y: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let m = self.modes();
        let eta = self.surrogate.evaluate(y);
        let mut d = DVector::zeros(2 * m);
        for i in 0..m {
            d[i] = y[m + i];
            d[m + i] = p[i]
                - self.damping[i] * y[m + i]
                - self.frequencies[i] * self.frequencies[i] * y[i]
                - eta[i];
        }
        d
    }

    /// Static displacement scale `max |p_i| / omega_i^2`, with the
    /// surrogate's output range folded in so an unforced run still has one.
    fn static_scale(&self, p: &DMatrix<f64>) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.modes() {
            let w2 = self.frequencies[i] * self.frequencies[i];
            let out = &self.surrogate.output;
            let amp = p.row(i).amax() + out.mean[i].abs() + out.std[i];
            s = s.max(amp / w2);
        }
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    }

    /// Classical RK4 with `substeps` steps per sample; `p` (m x N_t) is
    /// held over each sample interval and the surrogate is evaluated at
    /// every stage.
    pub fn predict(&self, p: &DMatrix<f64>, dt: f64, substeps: usize) -> Result<RectifiedPrediction> {
        let m = self.modes();
        if p.nrows() != m {
            return Err(invalid(format!("{} input rows for {m} modes", p.nrows())));
        }
        if !(dt > 0.0 && dt.is_finite()) || substeps == 0 {
            return Err(invalid("sample interval and substeps must be positive"));
        }
        if self.frequencies.iter().any(|w| !(*w > 0.0)) || self.damping.len() != m {
            return Err(invalid("modal frequencies must be positive"));
        }
        let nt = p.ncols();
        let limit = DIVERGENCE_FACTOR * self.static_scale(p);
        let h = dt / substeps as f64;
        let mut q = DMatrix::zeros(m, nt);
        let mut q_dot = DMatrix::zeros(m, nt);
        let mut eta = DMatrix::zeros(m, nt);
        let mut outside = 0usize;
        let mut y = DVector::zeros(2 * m);
        for k in 0..nt {
            let t = k as f64 * dt;
            if k > 0 {
                let pk = p.column(k - 1).into_owned();
                let f = |_: f64, s: &DVector<f64>| self.rhs(s, &pk);
                for j in 0..substeps {
                    y = rk4_step(&f, t - dt + j as f64 * h, &y, h);
                }
                let qn = y.rows(0, m).norm();
                if !(qn <= limit) {
                    return Err(Error::UnstablePrediction { time: t });
                }
            }
            q.set_column(k, &y.rows(0, m));
            q_dot.set_column(k, &y.rows(m, m));
            eta.set_column(k, &self.surrogate.evaluate(&y));
            if self.surrogate.outside_training_box(&y, EXTRAPOLATION_MARGIN) {
                outside += 1;
            }
        }
        Ok(RectifiedPrediction {
            q,
            q_dot,
            eta,
            extrapolation_fraction: if nt == 0 { 0.0 } else { outside as f64 / nt as f64 },
        })
    }
}

/// Applies a surrogate trained in one discretization's modal coordinates
/// to another discretization's basis. The mode count must agree; diverging
/// frequencies only warn.
pub fn mesh_transfer_model(
    target: &ModalBasis,
    surrogate: Surrogate,
    trained_frequencies: &[f64],
) -> Result<RectifiedModel> {
    if trained_frequencies.len() != target.retained() || surrogate.modes() != target.retained() {
        return Err(Error::IncompatibleSurrogate(format!(
            "surrogate trained on {} modes, target basis retains {}",
            trained_frequencies.len(),
            target.retained()
        )));
    }
    for (i, rel) in frequency_mismatches(trained_frequencies, &target.frequencies) {
        warn!(
            "mode {}: trained frequency {:.4} vs target {:.4} rad/s ({:.1}% apart)",
            i + 1,
            trained_frequencies[i],
            target.frequencies[i],
            100.0 * rel
        );
    }
    RectifiedModel::new(target, surrogate)
}

/// Modes whose relative frequency difference exceeds the warning threshold.
pub fn frequency_mismatches(trained: &[f64], target: &[f64]) -> Vec<(usize, f64)> {
    trained
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
        .enumerate()
        .filter(|(_, rel)| *rel > FREQUENCY_WARN_RELATIVE)
        .collect()
}
