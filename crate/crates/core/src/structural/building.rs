use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DofInfo, DofKind, FeModel};
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryDamage {
    /// 1-based story index; story 1 connects the first floor to the ground.
    pub story: usize,
    /// Fraction of the story stiffness removed, in [0, 1).
    pub fraction: f64,
}

/// Planar shear building, one lateral DOF per floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearBuildingSpec {
    pub story_masses: Vec<f64>,
    pub story_stiffnesses: Vec<f64>,
    #[serde(default)]
    pub damage: Option<StoryDamage>,
}

impl ShearBuildingSpec {
    pub fn uniform(n_stories: usize, mass: f64, stiffness: f64) -> Self {
        ShearBuildingSpec {
            story_masses: vec![mass; n_stories],
            story_stiffnesses: vec![stiffness; n_stories],
            damage: None,
        }
    }

    pub fn n_stories(&self) -> usize {
        self.story_masses.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.story_masses.len();
        if n == 0 || self.story_stiffnesses.len() != n {
            return Err(invalid(format!(
                "building needs matching non-empty mass ({n}) and stiffness ({}) lists",
                self.story_stiffnesses.len()
            )));
        }
        if self
            .story_masses
            .iter()
            .chain(&self.story_stiffnesses)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(invalid("story masses and stiffnesses must be positive"));
        }
        if let Some(d) = self.damage {
            if d.story == 0 || d.story > n {
                return Err(invalid(format!("damage story {} outside 1..={n}", d.story)));
            }
            if !(0.0..1.0).contains(&d.fraction) {
                return Err(invalid(format!(
                    "damage fraction must lie in [0, 1), got {}",
                    d.fraction
                )));
            }
        }
        Ok(())
    }
}

/// Tridiagonal stiffness, diagonal mass, zero damping (apply a
/// [`super::DampingSpec`] afterwards).
pub fn assemble_shear_building(spec: &ShearBuildingSpec) -> Result<FeModel> {
    spec.validate()?;
    let n = spec.n_stories();
    let mut ks = spec.story_stiffnesses.clone();
    if let Some(d) = spec.damage {
        ks[d.story - 1] *= 1.0 - d.fraction;
    }
    let mut k = DMatrix::zeros(n, n);
    for (i, &ki) in ks.iter().enumerate() {
        // story i joins floor i-1 (or ground) to floor i
        k[(i, i)] += ki;
        if i > 0 {
            k[(i - 1, i - 1)] += ki;
            k[(i - 1, i)] -= ki;
            k[(i, i - 1)] -= ki;
        }
    }
    let model = FeModel {
        mass: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spec.story_masses.clone())),
        damping: DMatrix::zeros(n, n),
        stiffness: k,
        dofs: (0..n)
            .map(|i| DofInfo {
                x: (i + 1) as f64,
                kind: DofKind::Translation,
                node: i + 1,
            })
            .collect(),
        element_count: n,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::generalized_symmetric_eigen;

    fn eigenvalues(spec: &ShearBuildingSpec) -> Vec<f64> {
        let m = assemble_shear_building(spec).unwrap();
        generalized_symmetric_eigen(&m.stiffness, &m.mass)
            .unwrap()
            .0
            .iter()
            .copied()
            .collect()
    }

    #[test]
    fn two_story_analytic() {
        let w2 = eigenvalues(&ShearBuildingSpec::uniform(2, 1.0, 1.0));
        let s5 = 5f64.sqrt();
        assert!((w2[0] - (3.0 - s5) / 2.0).abs() < 1e-12);
        assert!((w2[1] - (3.0 + s5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_damage_is_identity() {
        let plain = ShearBuildingSpec::uniform(5, 2.0, 3.0);
        let mut damaged = plain.clone();
        damaged.damage = Some(StoryDamage {
            story: 1,
            fraction: 0.0,
        });
        let a = assemble_shear_building(&plain).unwrap();
        let b = assemble_shear_building(&damaged).unwrap();
        assert_eq!(a.stiffness, b.stiffness);
        assert_eq!(a.mass, b.mass);
    }

    #[test]
    fn damage_lowers_frequencies() {
        let plain = ShearBuildingSpec::uniform(6, 1.0e5, 2.0e8);
        let mut damaged = plain.clone();
        damaged.damage = Some(StoryDamage {
            story: 1,
            fraction: 0.3,
        });
        for (a, b) in eigenvalues(&plain).iter().zip(eigenvalues(&damaged)) {
            assert!(b <= *a * (1.0 + 1e-12));
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = ShearBuildingSpec::uniform(3, 1.0, 1.0);
        s.damage = Some(StoryDamage {
            story: 4,
            fraction: 0.1,
        });
        assert!(assemble_shear_building(&s).is_err());
        s.damage = Some(StoryDamage {
            story: 1,
            fraction: 1.0,
        });
        assert!(assemble_shear_building(&s).is_err());
        let s = ShearBuildingSpec {
            story_masses: vec![1.0, -1.0],
            story_stiffnesses: vec![1.0, 1.0],
            damage: None,
        };
        assert!(assemble_shear_building(&s).is_err());
    }
}
