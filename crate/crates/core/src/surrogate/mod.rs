//! Neural surrogate for the latent forces as a function of the modal state,
//! `eta = g(q, q')`, trained on smoothed trajectories.

mod mlp;

pub use mlp::{sigmoid, Adam, Mlp, MlpGrad};

use std::collections::BTreeMap;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Per-channel z-score; constant channels keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Columns of `data` are samples.
    pub fn fit(data: &DMatrix<f64>) -> Self {
        let n = data.ncols().max(1) as f64;
        let mut mean = Vec::with_capacity(data.nrows());
        let mut std = Vec::with_capacity(data.nrows());
        for row in data.row_iter() {
            let mu = row.sum() / n;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            mean.push(mu);
            std.push(if s > 1e-12 * scale && s.is_finite() { s } else { 1.0 });
        }
        Normalizer { mean, std }
    }

    pub fn identity(n: usize) -> Self {
        Normalizer {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
            (data[(i, j)] - self.mean[i]) / self.std[i]
        })
    }

    pub fn invert(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
            data[(i, j)] * self.std[i] + self.mean[i]
        })
    }
}

/// Trained map from `[q; q']` (length `2m`) to `eta` (length `m`), in
/// physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub net: Mlp,
    pub input: Normalizer,
    pub output: Normalizer,
    /// Per-input-channel range of the training states.
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
}

impl Surrogate {
    /// A surrogate that returns zero everywhere.
    pub fn zero(modes: usize, hidden: usize) -> Self {
        let mut net = Mlp::init(2 * modes, hidden, modes, &mut ChaCha8Rng::seed_from_u64(0));
        net.w2.fill(0.0);
        net.b2.fill(0.0);
        Surrogate {
            net,
            input: Normalizer::identity(2 * modes),
            output: Normalizer::identity(modes),
            input_min: vec![f64::NEG_INFINITY; 2 * modes],
            input_max: vec![f64::INFINITY; 2 * modes],
        }
    }

    pub fn modes(&self) -> usize {
        self.net.outputs()
    }

    pub fn hidden(&self) -> usize {
        self.net.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let m = self.modes();
        if self.net.inputs() != 2 * m
            || self.input.dim() != 2 * m
            || self.output.dim() != m
            || self.input_min.len() != 2 * m
            || self.input_max.len() != 2 * m
        {
            return Err(invalid("surrogate shapes are inconsistent"));
        }
        if self.input.std.iter().chain(&self.output.std).any(|s| !(*s > 0.0)) {
            return Err(invalid("normalizer scales must be positive"));
        }
        Ok(())
    }

    /// `eta` at one state `[q; q']`.
    pub fn evaluate(&self, state: &DVector<f64>) -> DVector<f64> {
        let x = DVector::from_fn(state.len(), |i, _| {
            (state[i] - self.input.mean[i]) / self.input.std[i]
        });
        let y = self.net.forward_one(&x);
        DVector::from_fn(y.len(), |i, _| y[i] * self.output.std[i] + self.output.mean[i])
    }

    /// Columns of `states` are samples.
    pub fn evaluate_batch(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        self.output.invert(&self.net.forward(&self.input.apply(states)))
    }

    /// `d eta / d [q; q']` in physical units.
    pub fn input_jacobian(&self, state: &DVector<f64>) -> DMatrix<f64> {
        let x = DVector::from_fn(state.len(), |i, _| {
            (state[i] - self.input.mean[i]) / self.input.std[i]
        });
        let j = self.net.input_jacobian(&x);
        DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| {
            j[(r, c)] * self.output.std[r] / self.input.std[c]
        })
    }

    /// Whether `state` lies outside the training box widened by `margin`
    /// times its width on each side.
    pub fn outside_training_box(&self, state: &DVector<f64>, margin: f64) -> bool {
        state.iter().enumerate().any(|(i, v)| {
            let (lo, hi) = (self.input_min[i], self.input_max[i]);
            let w = margin * (hi - lo);
            *v < lo - w || *v > hi + w
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Fixed hidden width; cross-validated over `hidden_grid` when absent.
    pub hidden: Option<usize>,
    pub hidden_grid: Vec<usize>,
    pub folds: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Trailing share of the samples held out for early stopping.
    pub validation_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Independent initializations; the caller keeps the best closed-loop fit.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: None,
            hidden_grid: vec![20, 50, 100],
            folds: 5,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            validation_fraction: 0.2,
            patience: 50,
            max_epochs: 5000,
            l2: 1e-6,
            seed: 0,
            restarts: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == Some(0) || self.hidden_grid.contains(&0) {
            return Err(invalid("hidden width must be positive"));
        }
        if self.hidden.is_none() && (self.hidden_grid.is_empty() || self.folds < 2) {
            return Err(invalid("cross-validation needs a non-empty grid and at least 2 folds"));
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(invalid("invalid ADAM settings"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.restarts == 0 {
            return Err(invalid("batch size, epochs, patience and restarts must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(invalid("validation fraction must lie in (0, 0.5]"));
        }
        if !(self.l2 >= 0.0) {
            return Err(invalid("l2 penalty must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub hidden: usize,
    pub mean_mse: f64,
    pub fold_mse: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub hidden: usize,
    pub samples: usize,
    pub training_samples: usize,
    pub validation_samples: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    /// Normalized-unit mean squared errors.
    pub best_validation_mse: f64,
    pub training_mse: f64,
    pub cv: Vec<CvScore>,
    pub seed: u64,
    /// Closed-loop NMSE on the training load, one per restart (infinite when unstable).
    #[serde(default)]
    pub rollout_nmse: Vec<Option<f64>>,
}

/// Fits normalizers and weights on `inputs` (`2m x N`) and `targets`
/// (`m x N`); the last `validation_fraction` of the columns drive early
/// stopping and the best-validation weights are returned.
pub fn train(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(Surrogate, TrainingReport)> {
    cfg.validate()?;
    let n = inputs.ncols();
    let m = targets.nrows();
    if inputs.nrows() != 2 * m || targets.ncols() != n {
        return Err(invalid(format!(
            "training inputs {:?} and targets {:?} do not pair up",
            inputs.shape(),
            targets.shape()
        )));
    }
    if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("training data contains non-finite values"));
    }
    let n_val = ((n as f64) * cfg.validation_fraction).round() as usize;
    let n_tr = n - n_val;
    if n_val == 0 || n_tr == 0 {
        return Err(invalid(format!("{n} samples are too few to split")));
    }

    let input = Normalizer::fit(&inputs.columns(0, n_tr).into_owned());
    let output = Normalizer::fit(&targets.columns(0, n_tr).into_owned());
    let x = input.apply(inputs);
    let t = output.apply(targets);
    let (x_tr, t_tr) = (x.columns(0, n_tr).into_owned(), t.columns(0, n_tr).into_owned());
    let (x_val, t_val) = (x.columns(n_tr, n_val).into_owned(), t.columns(n_tr, n_val).into_owned());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::init(2 * m, hidden, m, &mut rng);
    let mut adam = Adam::new(&net, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut order: Vec<usize> = (0..n_tr).collect();
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x_tr.select_columns(chunk);
            let tb = t_tr.select_columns(chunk);
            let (loss, g) = net.loss_and_gradient(&xb, &tb, cfg.l2);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.update(&mut net, &g);
        }
        let val = mse(&net.forward(&x_val), &t_val);
        if !val.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if val < best.0 {
            best = (val, epoch, net.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (best_val, best_epoch, net) = best;
    let training_mse = mse(&net.forward(&x_tr), &t_tr);
    debug!("H={hidden}: {epochs} epochs, best validation MSE {best_val:.4e} at {best_epoch}");

    let input_min = inputs.row_iter().map(|r| r.min()).collect();
    let input_max = inputs.row_iter().map(|r| r.max()).collect();
    Ok((
        Surrogate {
            net,
            input,
            output,
            input_min,
            input_max,
        },
        TrainingReport {
            hidden,
            samples: n,
            training_samples: n_tr,
            validation_samples: n_val,
            epochs,
            best_epoch,
            best_validation_mse: best_val,
            training_mse,
            cv: Vec::new(),
            seed: cfg.seed,
            rollout_nmse: Vec::new(),
        },
    ))
}

fn mse(y: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    (y - t).norm_squared() / (t.len().max(1)) as f64
}

/// Contiguous-block K-fold cross-validation of the hidden width. Each fold
/// trains on the remaining blocks (early stopping on their trailing part)
/// and scores the held-out block in the training normalization. Ties go to
/// the smaller width.
pub fn select_hidden_size(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<Vec<CvScore>> {
    cfg.validate()?;
    let n = inputs.ncols();
    let k = cfg.folds;
    if n < 2 * k {
        return Err(Error::SelectionFailure(format!("{n} samples for {k} folds")));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .hidden_grid
        .iter()
        .flat_map(|h| (0..k).map(move |f| (*h, f)))
        .collect();
    let scores: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(h, f)| {
            let lo = f * n / k;
            let hi = (f + 1) * n / k;
            let keep: Vec<usize> = (0..lo).chain(hi..n).collect();
            let held: Vec<usize> = (lo..hi).collect();
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(f as u64),
                ..cfg.clone()
            };
            let (s, _) = train(
                &inputs.select_columns(&keep),
                &targets.select_columns(&keep),
                h,
                &fold_cfg,
            )?;
            let pred = s.output.apply(&s.evaluate_batch(&inputs.select_columns(&held)));
            Ok(mse(&pred, &s.output.apply(&targets.select_columns(&held))))
        })
        .collect();
    let mut out = Vec::new();
    for (gi, h) in cfg.hidden_grid.iter().enumerate() {
        let mut folds = Vec::with_capacity(k);
        for r in &scores[gi * k..(gi + 1) * k] {
            match r {
                Ok(v) => folds.push(*v),
                Err(e) => return Err(Error::SelectionFailure(format!("H={h}: {e}"))),
            }
        }
        out.push(CvScore {
            hidden: *h,
            mean_mse: folds.iter().sum::<f64>() / k as f64,
            fold_mse: folds,
        });
    }
    Ok(out)
}

/// Smallest width whose mean CV error is within a relative `1e-9` of the best.
pub fn pick_hidden(scores: &[CvScore]) -> Result<usize> {
    let best = scores
        .iter()
        .map(|s| s.mean_mse)
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::SelectionFailure("no finite cross-validation score".into()));
    }
    Ok(scores
        .iter()
        .filter(|s| s.mean_mse <= best * (1.0 + 1e-9))
        .map(|s| s.hidden)
        .min()
        .expect("best score belongs to some width"))
}

/// Cross-validates the width unless fixed, then trains on all samples.
pub fn fit(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<(Surrogate, TrainingReport)> {
    cfg.validate()?;
    let (hidden, cv) = match cfg.hidden {
        Some(h) => (h, Vec::new()),
        None => {
            let cv = select_hidden_size(inputs, targets, cfg)?;
            let h = pick_hidden(&cv)?;
            info!(
                "hidden width {h} chosen from {:?}",
                cv.iter().map(|c| (c.hidden, c.mean_mse)).collect::<Vec<_>>()
            );
            (h, cv)
        }
    };
    let (s, mut report) = train(inputs, targets, hidden, cfg)?;
    report.cv = cv;
    Ok((s, report))
}

/// Stacks `[q; q']` from separate series.
pub fn stack_states(q: &DMatrix<f64>, q_dot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.shape() != q_dot.shape() {
        return Err(invalid("displacement and velocity series differ in shape"));
    }
    let (m, n) = q.shape();
    let mut x = DMatrix::zeros(2 * m, n);
    x.view_mut((0, 0), (m, n)).copy_from(q);
    x.view_mut((m, 0), (m, n)).copy_from(q_dot);
    Ok(x)
}

/// JSON form with row-major weight arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateArtifact {
    pub modes: usize,
    pub hidden: usize,
    pub activation: String,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    /// Modal frequencies of the basis the surrogate was trained in.
    pub frequencies: Vec<f64>,
    #[serde(default)]
    pub training: Option<TrainingReport>,
    /// Hashes of the configuration and upstream artifacts.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

const ACTIVATION: &str = "sigmoid";

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nr = r.len();
    let nc = r.first().map_or(0, |x| x.len());
    if r.iter().any(|x| x.len() != nc) {
        return Err(invalid(format!("{what} rows differ in length")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| r[i][j]))
}

impl SurrogateArtifact {
    pub fn new(s: &Surrogate, frequencies: &[f64], training: Option<TrainingReport>) -> Self {
        SurrogateArtifact {
            modes: s.modes(),
            hidden: s.hidden(),
            activation: ACTIVATION.into(),
            input_mean: s.input.mean.clone(),
            input_std: s.input.std.clone(),
            output_mean: s.output.mean.clone(),
            output_std: s.output.std.clone(),
            input_min: s.input_min.clone(),
            input_max: s.input_max.clone(),
            w1: rows(&s.net.w1),
            b1: s.net.b1.iter().copied().collect(),
            w2: rows(&s.net.w2),
            b2: s.net.b2.iter().copied().collect(),
            frequencies: frequencies.to_vec(),
            training,
            provenance: BTreeMap::new(),
        }
    }

    pub fn to_surrogate(&self) -> Result<Surrogate> {
        if self.activation != ACTIVATION {
            return Err(invalid(format!("unsupported activation {}", self.activation)));
        }
        let s = Surrogate {
            net: Mlp {
                w1: from_rows(&self.w1, "w1")?,
                b1: DVector::from_vec(self.b1.clone()),
                w2: from_rows(&self.w2, "w2")?,
                b2: DVector::from_vec(self.b2.clone()),
            },
            input: Normalizer {
                mean: self.input_mean.clone(),
                std: self.input_std.clone(),
            },
            output: Normalizer {
                mean: self.output_mean.clone(),
                std: self.output_std.clone(),
            },
            input_min: self.input_min.clone(),
            input_max: self.input_max.clone(),
        };
        s.validate()?;
        if s.modes() != self.modes || s.hidden() != self.hidden || self.frequencies.len() != self.modes
        {
            return Err(invalid("surrogate artifact header disagrees with its weights"));
        }
        Ok(s)
    }
}
