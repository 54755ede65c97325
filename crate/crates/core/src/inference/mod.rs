//! Joint state and latent-force estimation: Kalman filtering, RTS
//! smoothing and MAP learning of the GP hyperparameters.

mod kalman;
mod priors;

pub use kalman::{
    kalman_filter, log_likelihood, rts_smoother, FilterOutput, GaussianBelief, MeasurementModel,
    SmoothedTrajectory,
};
pub use priors::{PriorSpec, StudentT};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use log::{debug, info};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp::{assemble_augmented_with, discretize, DiscreteSsm, GpHyperparams, LatentKernel};

/// Everything the posterior depends on besides the hyperparameters.
#[derive(Clone, Debug)]
pub struct InferenceProblem {
    pub frequencies: Vec<f64>,
    /// `2 zeta_i omega_i`
    pub damping: Vec<f64>,
    /// Mode-shape rows at the sensors, `N_y x m`.
    pub sensor_rows: DMatrix<f64>,
    /// Measurements, `N_y x N_t`.
    pub y: DMatrix<f64>,
    /// Modal input `Phi^T f`, `m x N_t`.
    pub p: DMatrix<f64>,
    pub dt: f64,
    /// Measurement noise std used in `R`.
    pub sigma_r: f64,
    pub jitter: f64,
    /// Prior variance of the initial modal displacements and velocities.
    pub sigma_q2: f64,
}

impl InferenceProblem {
    pub fn modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.modes();
        if m == 0 || self.damping.len() != m || self.sensor_rows.ncols() != m {
            return Err(invalid("inconsistent modal dimensions"));
        }
        if self.y.nrows() != self.sensor_rows.nrows() || self.p.nrows() != m {
            return Err(invalid("measurement or input rows do not match the model"));
        }
        if self.y.ncols() != self.p.ncols() {
            return Err(invalid("measurements and inputs are not on the same grid"));
        }
        Ok(())
    }

    pub fn system(
        &self,
        theta: &GpHyperparams,
    ) -> Result<(DiscreteSsm, MeasurementModel, GaussianBelief)> {
        theta.validate()?;
        if theta.modes() != self.modes() {
            return Err(invalid("hyperparameter count does not match the mode count"));
        }
        let kernels = theta.kernels();
        let refs: Vec<&dyn LatentKernel> = kernels.iter().map(|k| k as &dyn LatentKernel).collect();
        let ssm = discretize(
            &assemble_augmented_with(&self.frequencies, &self.damping, &refs, self.jitter)?,
            self.dt,
        )?;
        let meas = MeasurementModel::displacement(&self.sensor_rows, ssm.state_dim(), self.sigma_r)?;
        let prior = GaussianBelief::rest_prior(self.modes(), self.sigma_q2, &theta.amplitude);
        Ok((ssm, meas, prior))
    }

    pub fn log_likelihood(&self, theta: &GpHyperparams, steady_tol: f64) -> Result<f64> {
        let (ssm, meas, prior) = self.system(theta)?;
        match self.projected()? {
            Some(proj) => {
                let meas = MeasurementModel::displacement(&proj.rows, ssm.state_dim(), self.sigma_r)?;
                let ll = log_likelihood(&ssm, &meas, &proj.y, &self.p, &prior, steady_tol)?;
                Ok(ll + proj.constant)
            }
            None => log_likelihood(&ssm, &meas, &self.y, &self.p, &prior, steady_tol),
        }
    }

    /// With `R = sigma^2 I` and more sensors than modes, the measurements
    /// split exactly into their projection on the range of `S Phi` and an
    /// orthogonal remainder that does not depend on the state, so the
    /// likelihood is a filter over `m` channels plus a constant.
    fn projected(&self) -> Result<Option<Projection>> {
        let (ny, m) = self.sensor_rows.shape();
        if ny <= m {
            return Ok(None);
        }
        let qr = self.sensor_rows.clone().qr();
        let r = qr.r();
        let scale = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
            return Ok(None);
        }
        let q1 = qr.q();
        let y = q1.transpose() * &self.y;
        let resid = (&self.y - &q1 * &y).norm_squared();
        let s2 = self.sigma_r * self.sigma_r;
        let nt = self.y.ncols() as f64;
        let constant = -0.5
            * (nt * (ny - m) as f64 * (2.0 * std::f64::consts::PI * s2).ln() + resid / s2);
        Ok(Some(Projection { rows: r, y, constant }))
    }

    pub fn smooth(&self, theta: &GpHyperparams) -> Result<SmoothedTrajectory> {
        let (ssm, meas, prior) = self.system(theta)?;
        let filt = kalman_filter(&ssm, &meas, &self.y, &self.p, &prior)?;
        rts_smoother(&ssm, &filt)
    }
}

struct Projection {
    /// `R` of the thin QR of the sensor rows (`m x m`).
    rows: DMatrix<f64>,
    /// `Q_1^T y`
    y: DMatrix<f64>,
    constant: f64,
}

/// Log-likelihood plus log-prior; `-inf` when the filter fails.
pub fn log_posterior(
    problem: &InferenceProblem,
    theta: &GpHyperparams,
    priors: &PriorSpec,
    steady_tol: f64,
) -> f64 {
    match problem.log_likelihood(theta, steady_tol) {
        Ok(ll) => ll + priors.ln_prior(theta),
        Err(e) => {
            debug!("log posterior undefined at {theta:?}: {e}");
            f64::NEG_INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub starts: usize,
    pub seed: u64,
    /// Standard deviation of the log-normal perturbation of the start points.
    pub spread: f64,
    pub max_iters: u64,
    /// Nelder-Mead stops when the cost standard deviation over the simplex
    /// falls below this.
    pub tolerance: f64,
    /// Initial simplex edge in log coordinates.
    pub simplex_step: f64,
    /// Relative covariance change below which the likelihood filter freezes
    /// its gain; 0 disables.
    pub steady_tol: f64,
    /// First start point; the prior modes when absent.
    pub initial: Option<GpHyperparams>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            starts: 5,
            seed: 0,
            spread: 1.5,
            max_iters: 600,
            tolerance: 1e-6,
            simplex_step: 1.0,
            steady_tol: 1e-9,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: GpHyperparams,
    pub start_log_posterior: f64,
    pub best: GpHyperparams,
    pub log_posterior: f64,
    pub iterations: u64,
    pub evaluations: u64,
    pub termination: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub theta: GpHyperparams,
    pub log_posterior: f64,
    pub traces: Vec<StartTrace>,
}

struct NegLogPosterior<'a> {
    problem: &'a InferenceProblem,
    priors: &'a PriorSpec,
    steady_tol: f64,
}

/// Stand-in cost for failed evaluations so the simplex can still be ordered.
const FAILED_COST: f64 = 1e300;

impl CostFunction for NegLogPosterior<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        if x.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return Ok(FAILED_COST);
        }
        let lp = log_posterior(
            self.problem,
            &GpHyperparams::from_log(x),
            self.priors,
            self.steady_tol,
        );
        Ok(if lp.is_finite() { -lp } else { FAILED_COST })
    }
}

fn start_points(m: usize, priors: &PriorSpec, cfg: &MapConfig) -> Vec<Vec<f64>> {
    let base = cfg.initial.clone().unwrap_or_else(|| priors.modes(m)).to_log();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![base.clone()];
    for _ in 1..cfg.starts {
        starts.push(
            base.iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + cfg.spread * z
                })
                .collect(),
        );
    }
    starts
}

/// Maximizes the log posterior over `log(theta)` with Nelder-Mead from
/// several start points (evaluated in parallel); returns the best.
pub fn map_optimize(
    problem: &InferenceProblem,
    priors: &PriorSpec,
    cfg: &MapConfig,
) -> Result<MapResult> {
    problem.validate()?;
    if cfg.starts == 0 {
        return Err(invalid("at least one optimizer start is required"));
    }
    let m = problem.modes();
    if let Some(init) = &cfg.initial {
        if init.modes() != m {
            return Err(invalid("initial hyperparameters do not match the mode count"));
        }
        init.validate()?;
    }
    let starts = start_points(m, priors, cfg);
    let runs: Vec<std::result::Result<StartTrace, String>> = starts
        .par_iter()
        .map(|x0| run_start(problem, priors, cfg, x0))
        .collect();

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for r in runs {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => failures.push(e),
        }
    }
    let best = traces
        .iter()
        .filter(|t| t.log_posterior.is_finite())
        .max_by(|a, b| a.log_posterior.total_cmp(&b.log_posterior))
        .cloned()
        .ok_or_else(|| {
            Error::OptimizationFailure(format!(
                "all {} starts failed: {}",
                cfg.starts,
                failures.join("; ")
            ))
        })?;
    info!(
        "MAP log posterior {:.6e} at alpha={:?} l={:?}",
        best.log_posterior, best.best.amplitude, best.best.length_scale
    );
    Ok(MapResult {
        theta: best.best,
        log_posterior: best.log_posterior,
        traces,
    })
}

fn run_start(
    problem: &InferenceProblem,
    priors: &PriorSpec,
    cfg: &MapConfig,
    x0: &[f64],
) -> std::result::Result<StartTrace, String> {
    let cost = NegLogPosterior {
        problem,
        priors,
        steady_tol: cfg.steady_tol,
    };
    let start_value = -cost.cost(&x0.to_vec()).map_err(|e| e.to_string())?;
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += cfg.simplex_step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(cfg.tolerance)
        .map_err(|e| e.to_string())?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(cfg.max_iters))
        .run()
        .map_err(|e| e.to_string())?;
    let state = res.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| "optimizer returned no parameters".to_string())?;
    let value = -state.get_best_cost();
    let evaluations = state
        .get_func_counts()
        .get("cost_count")
        .copied()
        .unwrap_or(0);
    Ok(StartTrace {
        start: GpHyperparams::from_log(x0),
        start_log_posterior: start_value,
        best: GpHyperparams::from_log(&best),
        log_posterior: if value <= -FAILED_COST { f64::NEG_INFINITY } else { value },
        iterations: state.get_iter(),
        evaluations,
        termination: state.get_termination_status().to_string(),
    })
}

#[cfg(test)]
mod tests;
