use log::info;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::seeds::derive_seed;
use crate::config::{ExperimentConfig, GpSection, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::gp::{modal_state_space, zoh_transition};
use crate::inference::{map_optimize, InferenceProblem, MapConfig, MapResult, SmoothedTrajectory};
use crate::metrics::{averaged_log_fft, correlation, nmse, row_rms};
use crate::modal::{project_force, reconstruct, select_mode_count, solve_modes, ModalBasis};
use crate::rectify::{mesh_transfer_model, RectifiedModel, RectifiedPrediction};
use crate::structural::{DofInfo, FeModel};
use crate::surrogate::{fit, stack_states, Surrogate, TrainConfig, TrainingReport};
use crate::truth::{
    apply_sensors_and_noise, match_dofs, simulate_truth, true_discrepancy_oracle, ExcitationSpec,
    NonlinearRestoring, SensorData, SensorSpec, TruthRecord,
};

/// Assembled truth and nominal systems of one experiment.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub truth: FeModel,
    pub nonlinearity: NonlinearRestoring,
    pub nominal: FeModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl Scenario {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Scenario {
            truth: config.model.truth.assemble()?,
            nonlinearity: config.model.truth.nonlinearity,
            nominal: config.model.nominal.assemble()?,
            config: config.clone(),
        })
    }

    pub fn excitation(&self, split: Split) -> ExcitationSpec {
        match split {
            Split::Train => self.config.excitation.train_spec(),
            Split::Test => self.config.excitation.test_spec(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.config.excitation.dt
    }

    pub fn simulate(&self, split: Split) -> Result<TruthRecord> {
        simulate_truth(
            &self.truth,
            &self.nonlinearity,
            &self.excitation(split),
            self.config.integrator.truth_substeps,
        )
    }

    /// Seed of the measurement noise at one level.
    pub fn noise_seed(&self, noise_percent: f64) -> u64 {
        derive_seed(self.config.seed, &format!("noise/{noise_percent}"))
    }

    pub fn observe(&self, truth: &TruthRecord, noise_percent: f64) -> Result<SensorData> {
        let spec = SensorSpec {
            positions: self.config.sensors.positions.clone(),
            noise_percent,
            seed: self.noise_seed(noise_percent),
        };
        apply_sensors_and_noise(truth, &spec)?
            .sensors
            .ok_or_else(|| Error::NumericalFailure("sensor extraction produced no data".into()))
    }

    /// Nominal modal basis; the mode count comes from the config or from the
    /// averaged spectrum of the (clean) training sensors.
    pub fn basis(&self, train_sensors: &SensorData) -> Result<ModalBasis> {
        let modal = &self.config.modal;
        let m = match modal.count {
            Some(m) => m,
            None => {
                let probe = solve_modes(&self.nominal, modal.max_modes.min(self.nominal.n_dof()))?;
                let spectrum = averaged_log_fft(&train_sensors.clean, self.dt())?;
                let m = select_mode_count(&spectrum, &probe.frequencies, modal.floor_db)?;
                info!("retaining {m} modes from the training spectra");
                m
            }
        };
        solve_modes(&self.nominal, m)
    }

    /// `Phi^T f` for one split on the nominal mesh.
    pub fn modal_force(&self, basis: &ModalBasis, split: Split) -> Result<DMatrix<f64>> {
        let f = self.excitation(split).force_series(&self.nominal)?;
        project_force(basis, &f)
    }
}

/// The same number of modes on another nominal discretization.
pub fn alternate_basis(spec: &ModelSpec, modes: usize) -> Result<(FeModel, ModalBasis)> {
    let model = spec.assemble()?;
    let basis = solve_modes(&model, modes)?;
    Ok((model, basis))
}

/// Response of the reduced nominal model (exact zero-order hold, from rest).
pub fn nominal_modal_response(basis: &ModalBasis, p: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let m = basis.retained();
    let ssm = modal_state_space(&basis.frequencies, &basis.damping)?;
    let (a, b) = zoh_transition(&ssm.a, &ssm.b, dt)?;
    let nt = p.ncols();
    let mut q = DMatrix::zeros(m, nt);
    let mut z = DVector::zeros(2 * m);
    for k in 1..nt {
        z = &a * &z + &b * p.column(k - 1);
        q.set_column(k, &z.rows(0, m));
    }
    Ok(q)
}

/// NMSE (percent) of an estimate on `dofs` against the truth DOFs with the
/// same coordinate and kind; every truth DOF must be covered.
pub fn nmse_against_truth(truth: &TruthRecord, dofs: &[DofInfo], u: &DMatrix<f64>) -> Result<f64> {
    let map = match_dofs(dofs, &truth.dofs)?;
    if u.nrows() != dofs.len() || u.ncols() != truth.steps() {
        return Err(invalid("estimate does not match its DOF list or the truth grid"));
    }
    nmse(&truth.displacement, &u.select_rows(&map))
}

#[derive(Clone, Debug)]
pub struct Inference {
    pub problem: InferenceProblem,
    pub map: MapResult,
    pub smoothed: SmoothedTrajectory,
}

/// Measurement-noise std entering `R`.
pub fn measurement_sigma(sensors: &SensorData, noise_floor: f64) -> f64 {
    let rms = row_rms(&sensors.noisy);
    let mean = rms.iter().sum::<f64>() / rms.len().max(1) as f64;
    sensors.sigma_n.max(noise_floor * mean)
}

pub fn build_problem(
    basis: &ModalBasis,
    sensors: &SensorData,
    p: DMatrix<f64>,
    dt: f64,
    gp: &GpSection,
) -> Result<InferenceProblem> {
    let problem = InferenceProblem {
        frequencies: basis.frequencies.clone(),
        damping: basis.damping.clone(),
        sensor_rows: basis.rows(&sensors.dofs),
        y: sensors.noisy.clone(),
        p,
        dt,
        sigma_r: measurement_sigma(sensors, gp.noise_floor),
        jitter: gp.jitter,
        sigma_q2: gp.sigma_q2,
    };
    problem.validate()?;
    Ok(problem)
}

/// MAP hyperparameters and the smoothed trajectory at them.
pub fn infer(problem: InferenceProblem, gp: &GpSection, seed: u64) -> Result<Inference> {
    let cfg = MapConfig {
        seed,
        ..gp.optimizer.clone()
    };
    let map = map_optimize(&problem, &gp.priors, &cfg)?;
    let smoothed = problem.smooth(&map.theta)?;
    Ok(Inference {
        problem,
        map,
        smoothed,
    })
}

/// Fits `cfg.restarts` networks from different initializations and keeps the
/// one whose closed-loop response to the training load tracks the smoothed
/// modal displacements best. Hidden width is chosen once, on the first restart.
pub fn train_surrogate(
    basis: &ModalBasis,
    (q, q_dot, eta): (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>),
    p_train: &DMatrix<f64>,
    dt: f64,
    substeps: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Surrogate, TrainingReport)> {
    let x = stack_states(q, q_dot)?;
    let mut best: Option<(f64, Surrogate, TrainingReport)> = None;
    let mut scores = Vec::with_capacity(cfg.restarts);
    let mut hidden = cfg.hidden;
    let mut cv = Vec::new();
    for r in 0..cfg.restarts {
        let c = TrainConfig {
            seed: if r == 0 { seed } else { derive_seed(seed, &format!("restart/{r}")) },
            hidden,
            ..cfg.clone()
        };
        let (sur, report) = fit(&x, eta, &c)?;
        if r == 0 {
            hidden = Some(report.hidden);
            cv = report.cv.clone();
        }
        let score = match predict(basis, &sur, p_train, dt, substeps) {
            Ok(pred) => nmse(q, &pred.q).ok().filter(|v| v.is_finite()),
            Err(e) if e.exit_code() == 3 => None,
            Err(e) => return Err(e),
        };
        info!("restart {r}: training rollout NMSE {score:?}");
        scores.push(score);
        let v = score.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, sur, report));
        }
    }
    let (_, sur, mut report) = best.ok_or_else(|| invalid("no surrogate restarts"))?;
    report.cv = cv;
    report.rollout_nmse = scores;
    Ok((sur, report))
}

pub fn predict(
    basis: &ModalBasis,
    surrogate: &Surrogate,
    p: &DMatrix<f64>,
    dt: f64,
    substeps: usize,
) -> Result<RectifiedPrediction> {
    RectifiedModel::new(basis, surrogate.clone())?.predict(p, dt, substeps)
}

/// Per-mode comparison of estimated and oracle latent forces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentForceReport {
    pub rms_estimate: Vec<f64>,
    pub rms_oracle: Vec<f64>,
    /// `rms_estimate / rms_oracle`
    pub ratio: Vec<f64>,
    pub correlation: Vec<f64>,
    pub rms_modal_input: Vec<f64>,
}

pub fn latent_force_report(
    eta: &DMatrix<f64>,
    oracle: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<LatentForceReport> {
    if eta.shape() != oracle.shape() || p.shape() != eta.shape() {
        return Err(invalid("latent force series differ in shape"));
    }
    let rms_estimate = row_rms(eta);
    let rms_oracle = row_rms(oracle);
    let ratio = rms_estimate
        .iter()
        .zip(&rms_oracle)
        .map(|(a, b)| if *b > 0.0 { a / b } else { f64::NAN })
        .collect();
    let correlation = (0..eta.nrows())
        .map(|i| {
            let a: Vec<f64> = eta.row(i).iter().copied().collect();
            let b: Vec<f64> = oracle.row(i).iter().copied().collect();
            correlation(&a, &b)
        })
        .collect();
    Ok(LatentForceReport {
        rms_estimate,
        rms_oracle,
        ratio,
        correlation,
        rms_modal_input: row_rms(p),
    })
}

/// Headline numbers of one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub noise_percent: f64,
    pub modes: usize,
    pub sigma_r: f64,
    pub train_nominal_nmse: f64,
    pub inference_nmse: f64,
    pub test_nominal_nmse: f64,
    pub rectified_nmse: f64,
    pub extrapolation_fraction: f64,
    pub hidden: usize,
    pub latent: LatentForceReport,
    #[serde(default)]
    pub transfer_nmse: Option<f64>,
}

/// Truth records shared by every noise level.
#[derive(Clone, Debug)]
pub struct Records {
    pub train: TruthRecord,
    pub test: TruthRecord,
    pub basis: ModalBasis,
    pub oracle: DMatrix<f64>,
}

impl Records {
    pub fn new(s: &Scenario) -> Result<Self> {
        let train = s.simulate(Split::Train)?;
        let test = s.simulate(Split::Test)?;
        let clean = s.observe(&train, 0.0)?;
        let basis = s.basis(&clean)?;
        let oracle = true_discrepancy_oracle(&s.nominal, &basis, &train).unwrap_or_else(|_| {
            DMatrix::from_element(basis.retained(), train.steps(), f64::NAN)
        });
        Ok(Records {
            train,
            test,
            basis,
            oracle,
        })
    }
}

/// Everything one noise level produces, kept in memory.
#[derive(Clone, Debug)]
pub struct LevelRun {
    pub result: LevelResult,
    pub inference: Inference,
    pub surrogate: Surrogate,
    pub report: TrainingReport,
    pub prediction: RectifiedPrediction,
}

/// Infer, train and predict at one noise level without touching the disk.
pub fn run_level(s: &Scenario, rec: &Records, noise_percent: f64) -> Result<LevelRun> {
    let cfg = &s.config;
    let dt = s.dt();
    let sensors = s.observe(&rec.train, noise_percent)?;
    let p_train = s.modal_force(&rec.basis, Split::Train)?;
    let problem = build_problem(&rec.basis, &sensors, p_train.clone(), dt, &cfg.gp)?;
    let sigma_r = problem.sigma_r;
    let inference = infer(problem, &cfg.gp, derive_seed(cfg.seed, &format!("map/{noise_percent}")))?;

    let nominal_train = reconstruct(&rec.basis, &nominal_modal_response(&rec.basis, &p_train, dt)?)?;
    let inferred = reconstruct(&rec.basis, &inference.smoothed.q())?;
    let train_nominal_nmse = nmse_against_truth(&rec.train, &rec.basis.dofs, &nominal_train)?;
    let inference_nmse = nmse_against_truth(&rec.train, &rec.basis.dofs, &inferred)?;

    let (surrogate, report) = train_surrogate(
        &rec.basis,
        (&inference.smoothed.q(), &inference.smoothed.q_dot(), &inference.smoothed.eta()),
        &p_train,
        dt,
        cfg.integrator.substeps,
        &cfg.surrogate,
        derive_seed(cfg.seed, &format!("surrogate/{noise_percent}")),
    )?;
    let p_test = s.modal_force(&rec.basis, Split::Test)?;
    let prediction = predict(&rec.basis, &surrogate, &p_test, dt, cfg.integrator.substeps)?;
    let nominal_test = reconstruct(&rec.basis, &nominal_modal_response(&rec.basis, &p_test, dt)?)?;
    let test_nominal_nmse = nmse_against_truth(&rec.test, &rec.basis.dofs, &nominal_test)?;
    let rectified_nmse =
        nmse_against_truth(&rec.test, &rec.basis.dofs, &reconstruct(&rec.basis, &prediction.q)?)?;
    let latent = latent_force_report(&inference.smoothed.eta(), &rec.oracle, &p_train)?;
    info!(
        "noise {noise_percent}%: inference {inference_nmse:.5} vs nominal {train_nominal_nmse:.5}; \
         rectified {rectified_nmse:.5} vs nominal {test_nominal_nmse:.5}"
    );
    Ok(LevelRun {
        result: LevelResult {
            noise_percent,
            modes: rec.basis.retained(),
            sigma_r,
            train_nominal_nmse,
            inference_nmse,
            test_nominal_nmse,
            rectified_nmse,
            extrapolation_fraction: prediction.extrapolation_fraction,
            hidden: report.hidden,
            latent,
            transfer_nmse: None,
        },
        inference,
        surrogate,
        report,
        prediction,
    })
}

/// Rectified test prediction on another nominal mesh with a surrogate
/// trained on the original one; NMSE over the truth DOFs.
pub fn transfer_nmse(
    s: &Scenario,
    rec: &Records,
    surrogate: &Surrogate,
    alt: &ModelSpec,
) -> Result<(f64, RectifiedPrediction, ModalBasis)> {
    let (model, basis) = alternate_basis(alt, rec.basis.retained())?;
    let rect = mesh_transfer_model(&basis, surrogate.clone(), &rec.basis.frequencies)?;
    let f = s.excitation(Split::Test).force_series(&model)?;
    let pred = rect.predict(&project_force(&basis, &f)?, s.dt(), s.config.integrator.substeps)?;
    let u = reconstruct(&basis, &pred.q)?;
    let map = match_dofs(&basis.dofs, &rec.test.dofs)?;
    let e = nmse(&rec.test.displacement, &u.select_rows(&map))?;
    Ok((e, pred, basis))
}
