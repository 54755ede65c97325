//! Finite-element structural models: beams, shear buildings and damping.

mod beam;
mod building;
mod damping;

pub use beam::{assemble_euler_bernoulli, assemble_timoshenko, BeamProperties, Boundary};
pub use building::{assemble_shear_building, ShearBuildingSpec, StoryDamage};
pub use damping::{
    build_rayleigh_damping, modal_damping_matrix, rayleigh_coefficients, DampingSpec,
    RayleighTargets,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DofKind {
    Translation,
    Rotation,
}

/// Where a free DOF lives on the structure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofInfo {
    /// Node coordinate along the beam axis (m), or story number for buildings.
    pub x: f64,
    pub kind: DofKind,
    pub node: usize,
}

/// Assembled mass, damping and stiffness with supports eliminated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeModel {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub dofs: Vec<DofInfo>,
    pub element_count: usize,
}

impl FeModel {
    pub fn n_dof(&self) -> usize {
        self.dofs.len()
    }

    /// Index of the DOF of `kind` whose node lies within `tol` of `x`,
    /// nearest first.
    pub fn find_dof(&self, x: f64, kind: DofKind, tol: f64) -> Option<usize> {
        self.dofs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind == kind && (d.x - x).abs() <= tol)
            .min_by(|a, b| (a.1.x - x).abs().total_cmp(&(b.1.x - x).abs()))
            .map(|(i, _)| i)
    }

    /// Smallest spacing between distinct node coordinates.
    pub fn node_spacing(&self) -> f64 {
        let mut xs: Vec<f64> = self.dofs.iter().map(|d| d.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        xs.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Returns a copy with the damping matrix replaced according to `spec`.
    pub fn with_damping(&self, spec: &DampingSpec) -> Result<FeModel> {
        let damping = spec.build(self)?;
        Ok(FeModel {
            damping,
            ..self.clone()
        })
    }

    /// Checks the symmetry/definiteness invariants of an assembled model.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_dof();
        for (name, mat) in [
            ("mass", &self.mass),
            ("damping", &self.damping),
            ("stiffness", &self.stiffness),
        ] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(invalid(format!(
                    "{name} matrix is {}x{} but the model has {n} DOFs",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            let asym = linalg::inf_norm(&(mat - mat.transpose()));
            if asym > 1e-12 * linalg::inf_norm(mat).max(f64::MIN_POSITIVE) {
                return Err(invalid(format!("{name} matrix is not symmetric")));
            }
        }
        if self.mass.clone().cholesky().is_none() {
            return Err(Error::AssemblyFailure("mass matrix is not positive definite".into()));
        }
        if self.stiffness.clone().cholesky().is_none() {
            return Err(Error::AssemblyFailure(
                "constrained stiffness matrix is singular or indefinite".into(),
            ));
        }
        Ok(())
    }
}

/// Adds a 4x4 element matrix into the global matrix at the element's DOFs.
pub(crate) fn scatter(global: &mut DMatrix<f64>, elem: &[[f64; 4]; 4], dofs: [usize; 4]) {
    for (a, &ga) in dofs.iter().enumerate() {
        for (b, &gb) in dofs.iter().enumerate() {
            global[(ga, gb)] += elem[a][b];
        }
    }
}

/// Removes the listed DOFs (rows and columns).
pub(crate) fn eliminate(mat: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), keep.len(), |i, j| mat[(keep[i], keep[j])])
}
