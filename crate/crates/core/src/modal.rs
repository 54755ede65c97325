//! Modal reduction: generalized eigenproblem, mode-count selection and
//! projections between physical and modal coordinates.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::generalized_symmetric_eigen;
use crate::metrics::AveragedSpectrum;
use crate::structural::{DofInfo, FeModel};

/// Relative tolerance under which two mode-shape entries count as equally
/// large when fixing signs; the lower DOF index (leftmost node) wins.
const SIGN_TIE_TOLERANCE: f64 = 1e-6;

/// Mass-normalized retained modes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalBasis {
    /// N x m, columns mass-normalized.
    pub mode_shapes: DMatrix<f64>,
    /// Natural frequencies (rad/s), ascending.
    pub frequencies: Vec<f64>,
    /// Diagonal of the modal damping matrix, `2 zeta_i omega_i` (1/s).
    pub damping: Vec<f64>,
    pub dofs: Vec<DofInfo>,
}

impl ModalBasis {
    pub fn retained(&self) -> usize {
        self.frequencies.len()
    }

    pub fn n_dof(&self) -> usize {
        self.mode_shapes.nrows()
    }

    pub fn damping_ratios(&self) -> Vec<f64> {
        self.damping
            .iter()
            .zip(&self.frequencies)
            .map(|(c, w)| c / (2.0 * w))
            .collect()
    }

    /// Replaces the modal damping with `2 zeta_i omega_i`.
    pub fn with_damping_ratios(mut self, ratios: &[f64]) -> Result<Self> {
        if ratios.len() != self.retained() {
            return Err(invalid(format!(
                "{} damping ratios for {} modes",
                ratios.len(),
                self.retained()
            )));
        }
        self.damping = ratios
            .iter()
            .zip(&self.frequencies)
            .map(|(z, w)| 2.0 * z * w)
            .collect();
        Ok(self)
    }

    /// Rows of the mode-shape matrix for the given DOFs.
    pub fn rows(&self, dofs: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(dofs.len(), self.retained(), |i, j| {
            self.mode_shapes[(dofs[i], j)]
        })
    }
}

/// Fixes each column's sign so its largest-magnitude entry is positive.
fn fix_signs(phi: &mut DMatrix<f64>) {
    for mut col in phi.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(v) = col
            .iter()
            .find(|v| v.abs() >= max * (1.0 - SIGN_TIE_TOLERANCE))
            .copied()
        {
            if v < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Lowest `m` eigenpairs of `K phi = M phi omega^2`, mass-normalized and
/// sign-fixed. Modal damping is the diagonal of `Phi^T C Phi`.
pub fn solve_modes(model: &FeModel, m: usize) -> Result<ModalBasis> {
    let n = model.n_dof();
    if m == 0 || m > n {
        return Err(invalid(format!("retained mode count {m} outside 1..={n}")));
    }
    if 4 * m > n {
        warn!("retaining {m} of {n} modes; the reduction is hardly a reduction");
    }
    let (vals, vecs) = generalized_symmetric_eigen(&model.stiffness, &model.mass)?;
    if vals[0] <= 0.0 {
        return Err(Error::NumericalFailure(format!(
            "non-positive eigenvalue {} (unconstrained model?)",
            vals[0]
        )));
    }
    let mut phi = vecs.columns(0, m).into_owned();
    fix_signs(&mut phi);
    let frequencies: Vec<f64> = vals.iter().take(m).map(|v| v.sqrt()).collect();
    if frequencies.windows(2).any(|w| w[1] <= w[0]) {
        warn!("repeated natural frequencies among retained modes");
    }
    let modal_c = phi.transpose() * &model.damping * &phi;
    Ok(ModalBasis {
        mode_shapes: phi,
        frequencies,
        damping: (0..m).map(|i| modal_c[(i, i)]).collect(),
        dofs: model.dofs.clone(),
    })
}

/// Retained mode count from an averaged log-magnitude response spectrum.
///
/// A mode counts when the spectrum peak within +-2% of its frequency exceeds
/// the median spectrum level by `floor_db`; the answer is the highest such
/// mode number (at least 1).
pub fn select_mode_count(
    spectrum: &AveragedSpectrum,
    natural_frequencies: &[f64],
    floor_db: f64,
) -> Result<usize> {
    if spectrum.omega.is_empty() || spectrum.omega.len() != spectrum.log_magnitude.len() {
        return Err(invalid("empty spectrum"));
    }
    let mut sorted = spectrum.log_magnitude.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let threshold = median + floor_db / 20.0;
    let mut selected = 0;
    for (i, &w) in natural_frequencies.iter().enumerate() {
        let peak = spectrum
            .omega
            .iter()
            .zip(&spectrum.log_magnitude)
            .filter(|(o, _)| (**o - w).abs() <= 0.02 * w)
            .map(|(_, l)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        if peak > threshold {
            selected = i + 1;
        }
    }
    if selected == 0 {
        warn!("no natural frequency clears the spectral floor; retaining one mode");
        selected = 1;
    }
    Ok(selected)
}

/// `p = Phi^T f` per column (one column per time step).
pub fn project_force(basis: &ModalBasis, force: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if force.nrows() != basis.n_dof() {
        return Err(invalid(format!(
            "force has {} rows, basis has {} DOFs",
            force.nrows(),
            basis.n_dof()
        )));
    }
    Ok(basis.mode_shapes.tr_mul(force))
}

/// `u = Phi q` per column.
pub fn reconstruct(basis: &ModalBasis, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.nrows() != basis.retained() {
        return Err(invalid(format!(
            "modal series has {} rows, basis retains {} modes",
            q.nrows(),
            basis.retained()
        )));
    }
    Ok(&basis.mode_shapes * q)
}

/// Mass-weighted projection `Phi^T M u` of a physical series.
pub fn modal_coordinates(
    basis: &ModalBasis,
    mass: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if u.nrows() != basis.n_dof() || mass.nrows() != basis.n_dof() {
        return Err(invalid("dimension mismatch in modal projection"));
    }
    Ok(basis.mode_shapes.tr_mul(&(mass * u)))
}

/// Serialized form of a basis (`basis.json`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisArtifact {
    pub frequencies: Vec<f64>,
    pub damping: Vec<f64>,
    pub sensor_dofs: Vec<usize>,
    /// Mode-shape rows at the sensor DOFs.
    pub sensor_rows: Vec<Vec<f64>>,
    /// Full mode-shape matrix, row per DOF, when requested.
    #[serde(default)]
    pub mode_shapes: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub dofs: Option<Vec<DofInfo>>,
}

impl BasisArtifact {
    pub fn from_basis(basis: &ModalBasis, sensor_dofs: &[usize], full: bool) -> Self {
        let rows = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|r| r.iter().copied().collect())
                .collect::<Vec<Vec<f64>>>()
        };
        BasisArtifact {
            frequencies: basis.frequencies.clone(),
            damping: basis.damping.clone(),
            sensor_dofs: sensor_dofs.to_vec(),
            sensor_rows: rows(&basis.rows(sensor_dofs)),
            mode_shapes: full.then(|| rows(&basis.mode_shapes)),
            dofs: full.then(|| basis.dofs.clone()),
        }
    }

    /// Rebuilds the full basis; requires the full mode-shape matrix.
    pub fn to_basis(&self) -> Result<ModalBasis> {
        let (Some(shapes), Some(dofs)) = (&self.mode_shapes, &self.dofs) else {
            return Err(Error::IncompatibleArtifacts(
                "basis artifact lacks the full mode-shape matrix".into(),
            ));
        };
        let m = self.frequencies.len();
        if shapes.iter().any(|r| r.len() != m) || shapes.len() != dofs.len() {
            return Err(Error::IncompatibleArtifacts(
                "basis artifact has inconsistent dimensions".into(),
            ));
        }
        Ok(ModalBasis {
            mode_shapes: DMatrix::from_fn(shapes.len(), m, |i, j| shapes[i][j]),
            frequencies: self.frequencies.clone(),
            damping: self.damping.clone(),
            dofs: dofs.clone(),
        })
    }
}
