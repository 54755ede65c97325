use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::FeModel;
use crate::error::{invalid, Error, Result};
use crate::linalg::{generalized_symmetric_eigen, symmetrize};

/// Two target damping ratios at two frequencies (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayleighTargets {
    pub zeta_i: f64,
    pub omega_i: f64,
    pub zeta_j: f64,
    pub omega_j: f64,
}

/// Mass/stiffness coefficients `(alpha, beta)` with
/// `zeta = (alpha / omega + beta * omega) / 2` at both targets.
pub fn rayleigh_coefficients(t: &RayleighTargets) -> Result<(f64, f64)> {
    if !(t.omega_i > 0.0 && t.omega_j > 0.0) {
        return Err(invalid("Rayleigh target frequencies must be positive"));
    }
    if (t.omega_i - t.omega_j).abs() <= f64::EPSILON * t.omega_i.max(t.omega_j) {
        return Err(Error::DegenerateTargets(t.omega_i));
    }
    for z in [t.zeta_i, t.zeta_j] {
        if !(z > 0.0 && z < 1.0) {
            return Err(invalid(format!("damping ratio {z} outside (0, 1)")));
        }
    }
    let a = Matrix2::new(
        0.5 / t.omega_i,
        0.5 * t.omega_i,
        0.5 / t.omega_j,
        0.5 * t.omega_j,
    );
    let x = a
        .lu()
        .solve(&Vector2::new(t.zeta_i, t.zeta_j))
        .ok_or(Error::DegenerateTargets(t.omega_i))?;
    Ok((x[0], x[1]))
}

/// `alpha M + beta K` for the given targets.
pub fn build_rayleigh_damping(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
    targets: &RayleighTargets,
) -> Result<DMatrix<f64>> {
    let (alpha, beta) = rayleigh_coefficients(targets)?;
    Ok(mass * alpha + stiffness * beta)
}

/// Physical damping whose projection on the first `ratios.len()` modes is
/// `diag(2 zeta_i omega_i)` and which vanishes on the remaining modes.
pub fn modal_damping_matrix(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
    ratios: &[f64],
) -> Result<DMatrix<f64>> {
    let n = mass.nrows();
    if ratios.is_empty() || ratios.len() > n {
        return Err(invalid(format!(
            "modal damping needs between 1 and {n} ratios, got {}",
            ratios.len()
        )));
    }
    if ratios.iter().any(|z| !(*z > 0.0 && *z < 1.0)) {
        return Err(invalid("modal damping ratios must lie in (0, 1)"));
    }
    let (vals, vecs) = generalized_symmetric_eigen(stiffness, mass)?;
    let mphi = mass * vecs.columns(0, ratios.len());
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        ratios.len(),
        ratios
            .iter()
            .zip(vals.iter())
            .map(|(z, l)| 2.0 * z * l.max(0.0).sqrt()),
    ));
    let mut c = &mphi * diag * mphi.transpose();
    symmetrize(&mut c);
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DampingSpec {
    /// Keep the viscous damping produced by element assembly.
    #[default]
    Element,
    None,
    Rayleigh {
        alpha: f64,
        beta: f64,
    },
    /// Rayleigh coefficients fitted to two modal damping ratios (1-based
    /// mode numbers of the model itself).
    RayleighTargets {
        zeta_i: f64,
        mode_i: usize,
        zeta_j: f64,
        mode_j: usize,
    },
    Modal {
        ratios: Vec<f64>,
    },
}

impl DampingSpec {
    pub fn build(&self, model: &FeModel) -> Result<DMatrix<f64>> {
        let n = model.n_dof();
        match self {
            DampingSpec::Element => Ok(model.damping.clone()),
            DampingSpec::None => Ok(DMatrix::zeros(n, n)),
            DampingSpec::Rayleigh { alpha, beta } => {
                if !(*alpha >= 0.0 && *beta >= 0.0) {
                    return Err(invalid("Rayleigh coefficients must be non-negative"));
                }
                Ok(&model.mass * *alpha + &model.stiffness * *beta)
            }
            DampingSpec::RayleighTargets {
                zeta_i,
                mode_i,
                zeta_j,
                mode_j,
            } => {
                if *mode_i == 0 || *mode_j == 0 || (*mode_i).max(*mode_j) > n {
                    return Err(invalid("Rayleigh target modes must be within 1..=N"));
                }
                let (vals, _) = generalized_symmetric_eigen(&model.stiffness, &model.mass)?;
                let targets = RayleighTargets {
                    zeta_i: *zeta_i,
                    omega_i: vals[mode_i - 1].sqrt(),
                    zeta_j: *zeta_j,
                    omega_j: vals[mode_j - 1].sqrt(),
                };
                build_rayleigh_damping(&model.mass, &model.stiffness, &targets)
            }
            DampingSpec::Modal { ratios } => {
                modal_damping_matrix(&model.mass, &model.stiffness, ratios)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{assemble_shear_building, ShearBuildingSpec};

    #[test]
    fn equal_ratio_targets_hand_solution() {
        let zeta = 0.05;
        let (a, b) = rayleigh_coefficients(&RayleighTargets {
            zeta_i: zeta,
            omega_i: 1.0,
            zeta_j: zeta,
            omega_j: 2.0,
        })
        .unwrap();
        assert!((a - 4.0 * zeta / 3.0).abs() < 1e-14);
        assert!((b - 2.0 * zeta / 3.0).abs() < 1e-14);
    }

    #[test]
    fn targets_reproduced() {
        let t = RayleighTargets {
            zeta_i: 0.02,
            omega_i: 7.0,
            zeta_j: 0.05,
            omega_j: 40.0,
        };
        let (a, b) = rayleigh_coefficients(&t).unwrap();
        let zeta = |w: f64| 0.5 * (a / w + b * w);
        assert!((zeta(7.0) / 0.02 - 1.0).abs() < 1e-10);
        assert!((zeta(40.0) / 0.05 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pure_mass_proportional() {
        // zeta proportional to 1/omega => beta = 0
        let t = RayleighTargets {
            zeta_i: 0.04,
            omega_i: 1.0,
            zeta_j: 0.02,
            omega_j: 2.0,
        };
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let k = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 1.0]);
        let (a, b) = rayleigh_coefficients(&t).unwrap();
        assert!(b.abs() < 1e-16);
        let c = build_rayleigh_damping(&m, &k, &t).unwrap();
        assert!((c - &m * a).amax() < 1e-16);
    }

    #[test]
    fn degenerate_targets() {
        let t = RayleighTargets {
            zeta_i: 0.02,
            omega_i: 3.0,
            zeta_j: 0.05,
            omega_j: 3.0,
        };
        assert!(matches!(
            rayleigh_coefficients(&t),
            Err(Error::DegenerateTargets(_))
        ));
    }

    #[test]
    fn rayleigh_is_diagonal_in_modal_coordinates() {
        let model = assemble_shear_building(&ShearBuildingSpec::uniform(4, 1.0, 100.0)).unwrap();
        let (vals, phi) = generalized_symmetric_eigen(&model.stiffness, &model.mass).unwrap();
        let w: Vec<f64> = vals.iter().map(|v| v.sqrt()).collect();
        let t = RayleighTargets {
            zeta_i: 0.03,
            omega_i: w[0],
            zeta_j: 0.03,
            omega_j: w[1],
        };
        let (a, b) = rayleigh_coefficients(&t).unwrap();
        let c = build_rayleigh_damping(&model.mass, &model.stiffness, &t).unwrap();
        let xi = phi.transpose() * c * &phi;
        // third mode ratio follows the Rayleigh curve
        let ratio = xi[(2, 2)] / (2.0 * w[2]);
        assert!((ratio - 0.5 * (a / w[2] + b * w[2])).abs() < 1e-10);
        assert!(xi[(0, 2)].abs() < 1e-10);
    }

    #[test]
    fn modal_damping_projects_to_diagonal() {
        let model = assemble_shear_building(&ShearBuildingSpec::uniform(5, 2.0, 50.0)).unwrap();
        let c = modal_damping_matrix(&model.mass, &model.stiffness, &[0.02, 0.03]).unwrap();
        let (vals, phi) = generalized_symmetric_eigen(&model.stiffness, &model.mass).unwrap();
        let xi = phi.transpose() * c * &phi;
        assert!((xi[(0, 0)] - 2.0 * 0.02 * vals[0].sqrt()).abs() < 1e-10);
        assert!((xi[(1, 1)] - 2.0 * 0.03 * vals[1].sqrt()).abs() < 1e-10);
        assert!(xi[(2, 2)].abs() < 1e-10);
        assert!(xi[(0, 1)].abs() < 1e-10);
    }
}
