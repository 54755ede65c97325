//! The "true" system: simulation, sensors with measurement noise and the
//! modal discrepancy oracle used for validation.

mod excitation;
pub mod ode;

pub use excitation::{ExcitationSpec, LoadSpec};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp::zoh_transition;
use crate::linalg::generalized_symmetric_eigen;
use crate::modal::ModalBasis;
use crate::structural::{DofInfo, DofKind, FeModel};
use ode::LawsonRk4;

/// Extra restoring force `g(u)` of the true system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearRestoring {
    #[default]
    None,
    /// Nodal force `kappa3 * u^3` (N) on every translational DOF.
    CubicStiffness { kappa3: f64 },
}

impl NonlinearRestoring {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NonlinearRestoring::CubicStiffness { kappa3 } if !(kappa3 >= 0.0) => {
                Err(invalid("cubic coefficient must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(
            self,
            NonlinearRestoring::None | NonlinearRestoring::CubicStiffness { kappa3: 0.0 }
        )
    }

    fn force(&self, dofs: &[DofInfo], u: &DVector<f64>) -> DVector<f64> {
        match *self {
            NonlinearRestoring::None => DVector::zeros(u.len()),
            NonlinearRestoring::CubicStiffness { kappa3 } => DVector::from_fn(u.len(), |i, _| {
                if dofs[i].kind == DofKind::Translation {
                    kappa3 * u[i].powi(3)
                } else {
                    0.0
                }
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Measured translational coordinates (m, or story numbers).
    pub positions: Vec<f64>,
    #[serde(default)]
    pub noise_percent: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorData {
    pub dofs: Vec<usize>,
    pub clean: DMatrix<f64>,
    pub noisy: DMatrix<f64>,
    pub sigma_n: f64,
}

/// Sampled response of the true system, one column per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthRecord {
    pub times: Vec<f64>,
    pub displacement: DMatrix<f64>,
    pub velocity: DMatrix<f64>,
    pub acceleration: DMatrix<f64>,
    pub force: DMatrix<f64>,
    pub dofs: Vec<DofInfo>,
    pub sensors: Option<SensorData>,
}

impl TruthRecord {
    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn steps(&self) -> usize {
        self.times.len()
    }
}

/// Substeps per sample for the nonlinear integrator.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// First-order form in undamped-mode coordinates scaled by frequency,
/// `s = [Omega x, x']` with `u = Psi x`; keeps `||A dt||` near `omega_max dt`.
struct BalancedSystem {
    psi: DMatrix<f64>,
    omega: DVector<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl BalancedSystem {
    fn new(model: &FeModel) -> Result<Self> {
        let n = model.n_dof();
        let (vals, psi) = generalized_symmetric_eigen(&model.stiffness, &model.mass)?;
        if vals[0] <= 0.0 {
            return Err(Error::NumericalFailure(
                "truth stiffness is not positive definite".into(),
            ));
        }
        let omega = vals.map(f64::sqrt);
        let c = psi.transpose() * &model.damping * &psi;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = omega[i];
            a[(n + i, i)] = -omega[i];
        }
        a.view_mut((n, n), (n, n)).copy_from(&(-c));
        let mut b = DMatrix::zeros(2 * n, n);
        b.view_mut((n, 0), (n, n)).copy_from(&psi.transpose());
        Ok(BalancedSystem { psi, omega, a, b })
    }

    fn displacement(&self, s: &DVector<f64>) -> DVector<f64> {
        let n = self.omega.len();
        let x = s.rows(0, n).component_div(&self.omega);
        &self.psi * x
    }

    fn velocity(&self, s: &DVector<f64>) -> DVector<f64> {
        let n = self.omega.len();
        &self.psi * s.rows(n, n)
    }
}

/// Integrates `M u'' + C u' + K u + g(u) = f(t)` from rest.
///
/// The force is held constant over each sample interval. Without `g` each
/// sample step is the exact zero-order-hold transition; with `g` the linear
/// part is still propagated exactly and `g` enters through Lawson RK4 with
/// `substeps` steps per sample.
pub fn simulate_truth(
    model: &FeModel,
    g: &NonlinearRestoring,
    exc: &ExcitationSpec,
    substeps: usize,
) -> Result<TruthRecord> {
    g.validate()?;
    if substeps == 0 {
        return Err(invalid("substep count must be at least 1"));
    }
    let times = exc.times()?;
    let force = exc.force_series(model)?;
    let nt = times.len();
    let n = model.n_dof();
    let sys = BalancedSystem::new(model)?;

    let f_scale = force.amax().max(f64::MIN_POSITIVE);
    let limit = 1e12 * f_scale / (sys.omega[0] * sys.omega[0]);

    let mut displacement = DMatrix::zeros(n, nt);
    let mut velocity = DMatrix::zeros(n, nt);
    let mut restoring = DMatrix::zeros(n, nt);
    let mut s = DVector::zeros(2 * n);

    let linear = g.is_linear();
    let (e, gamma) = zoh_transition(&sys.a, &sys.b, exc.dt)?;
    let lawson = (!linear).then(|| LawsonRk4::new(&sys.a, exc.dt / substeps as f64));

    for k in 0..nt {
        let u = sys.displacement(&s);
        if !u.iter().all(|v| v.is_finite()) || u.amax() > limit {
            return Err(Error::UnstableIntegration {
                time: times[k],
                substeps,
            });
        }
        let v = sys.velocity(&s);
        if !linear {
            restoring.set_column(k, &g.force(&model.dofs, &u));
        }
        displacement.set_column(k, &u);
        velocity.set_column(k, &v);
        if k + 1 == nt {
            break;
        }
        let fk = force.column(k).into_owned();
        match &lawson {
            None => s = &e * &s + &gamma * &fk,
            Some(stepper) => {
                let n_fn = |y: &DVector<f64>| {
                    let u = sys.displacement(y);
                    &sys.b * (&fk - g.force(&model.dofs, &u))
                };
                for _ in 0..substeps {
                    s = stepper.step(&n_fn, &s);
                }
            }
        }
    }

    let rhs = &force - &model.damping * &velocity - &model.stiffness * &displacement - restoring;
    let acceleration = model
        .mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("mass matrix is not positive definite".into()))?
        .solve(&rhs);

    Ok(TruthRecord {
        times,
        displacement,
        velocity,
        acceleration,
        force,
        dofs: model.dofs.clone(),
        sensors: None,
    })
}

/// Nearest translational DOF within half a node spacing of each position.
pub fn snap_sensors(dofs: &[DofInfo], positions: &[f64]) -> Result<Vec<usize>> {
    let mut xs: Vec<f64> = dofs.iter().map(|d| d.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let spacing = xs
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    positions
        .iter()
        .map(|&x| {
            dofs.iter()
                .enumerate()
                .filter(|(_, d)| d.kind == DofKind::Translation)
                .min_by(|a, b| (a.1.x - x).abs().total_cmp(&(b.1.x - x).abs()))
                .filter(|(_, d)| (d.x - x).abs() <= 0.5 * spacing + 1e-12)
                .map(|(i, _)| i)
                .ok_or_else(|| {
                    Error::InvalidSensor(format!("no translational node near x = {x}"))
                })
        })
        .collect()
}

/// `sigma_n = p/100 * mean over channels of the channel RMS`.
pub fn noise_std(clean: &DMatrix<f64>, noise_percent: f64) -> f64 {
    let rms = crate::metrics::row_rms(clean);
    noise_percent / 100.0 * rms.iter().sum::<f64>() / rms.len().max(1) as f64
}

/// Extracts the sensor channels and adds i.i.d. Gaussian noise with one
/// shared standard deviation.
pub fn apply_sensors_and_noise(truth: &TruthRecord, sensors: &SensorSpec) -> Result<TruthRecord> {
    if !(sensors.noise_percent >= 0.0) {
        return Err(invalid("noise percentage must be non-negative"));
    }
    if sensors.positions.is_empty() {
        return Err(Error::InvalidSensor("no sensor positions".into()));
    }
    let dofs = snap_sensors(&truth.dofs, &sensors.positions)?;
    let clean = DMatrix::from_fn(dofs.len(), truth.steps(), |i, k| {
        truth.displacement[(dofs[i], k)]
    });
    let sigma_n = noise_std(&clean, sensors.noise_percent);
    let mut noisy = clean.clone();
    if sigma_n > 0.0 {
        let dist = Normal::new(0.0, sigma_n).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(sensors.seed);
        for i in 0..noisy.nrows() {
            for k in 0..noisy.ncols() {
                noisy[(i, k)] += dist.sample(&mut rng);
            }
        }
    }
    Ok(TruthRecord {
        sensors: Some(SensorData {
            dofs,
            clean,
            noisy,
            sigma_n,
        }),
        ..truth.clone()
    })
}

/// Indices into `model` of the DOFs matching `dofs` by coordinate and kind.
pub fn match_dofs(model_dofs: &[DofInfo], dofs: &[DofInfo]) -> Result<Vec<usize>> {
    dofs.iter()
        .map(|d| {
            model_dofs
                .iter()
                .position(|m| m.kind == d.kind && (m.x - d.x).abs() <= 1e-9 * (1.0 + d.x.abs()))
                .ok_or_else(|| invalid(format!("no {:?} DOF at x = {}", d.kind, d.x)))
        })
        .collect()
}

/// Modal residual of the nominal equations driven by the true response,
/// `eta = Phi^T [f - M u'' - C u' - K u]`.
pub fn true_discrepancy_oracle(
    nominal: &FeModel,
    basis: &ModalBasis,
    truth: &TruthRecord,
) -> Result<DMatrix<f64>> {
    let n = nominal.n_dof();
    if truth.dofs.len() != n || basis.n_dof() != n {
        return Err(invalid(format!(
            "oracle needs matching DOF sets: nominal {n}, truth {}, basis {}",
            truth.dofs.len(),
            basis.n_dof()
        )));
    }
    let map = match_dofs(&nominal.dofs, &truth.dofs)?;
    if map.iter().enumerate().any(|(i, &j)| i != j) {
        return Err(invalid("truth and nominal DOF orderings differ"));
    }
    let nt = truth.steps();
    for m in [
        &truth.displacement,
        &truth.velocity,
        &truth.acceleration,
        &truth.force,
    ] {
        if m.shape() != (n, nt) {
            return Err(invalid("truth series are not on a shared grid"));
        }
    }
    let residual = &truth.force
        - &nominal.mass * &truth.acceleration
        - &nominal.damping * &truth.velocity
        - &nominal.stiffness * &truth.displacement;
    Ok(basis.mode_shapes.tr_mul(&residual))
}
