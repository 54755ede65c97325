use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{eliminate, scatter, DofInfo, DofKind, FeModel};
use crate::error::{invalid, Result};

/// First-mode damping ratio used when no translational damping coefficient
/// is given.
pub const DEFAULT_FIRST_MODE_DAMPING: f64 = 0.02;

/// Prismatic rectangular beam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamProperties {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
    #[serde(default = "default_shear_correction")]
    pub shear_correction: f64,
    /// Viscous damping per unit length on the transverse displacement
    /// (N s/m^2). `None` selects the coefficient that gives the
    /// Euler-Bernoulli first mode a 2% damping ratio.
    #[serde(default)]
    pub damping_w: Option<f64>,
    /// Viscous damping per unit length on the section rotation.
    #[serde(default)]
    pub damping_beta: f64,
}

fn default_shear_correction() -> f64 {
    5.0 / 6.0
}

impl BeamProperties {
    /// The 10 m steel beam of the reference experiments.
    pub fn reference() -> Self {
        BeamProperties {
            length: 10.0,
            width: 0.4,
            height: 0.5,
            youngs_modulus: 2.0e11,
            poisson_ratio: 0.3,
            density: 7800.0,
            shear_correction: default_shear_correction(),
            damping_w: None,
            damping_beta: 0.0,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn inertia(&self) -> f64 {
        self.width * self.height.powi(3) / 12.0
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    /// Closed-form simply supported Euler-Bernoulli frequency of mode `n` (rad/s).
    pub fn euler_bernoulli_frequency(&self, n: usize) -> f64 {
        let k = n as f64 * PI / self.length;
        k * k * (self.youngs_modulus * self.inertia() / (self.density * self.area())).sqrt()
    }

    /// Translational damping coefficient, resolving the default.
    pub fn c_w(&self) -> f64 {
        self.damping_w.unwrap_or_else(|| {
            // uniform c_w gives zeta_n = c_w / (2 rho A omega_n)
            2.0 * DEFAULT_FIRST_MODE_DAMPING
                * self.density
                * self.area()
                * self.euler_bernoulli_frequency(1)
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
            ("youngs_modulus", self.youngs_modulus),
            ("density", self.density),
            ("shear_correction", self.shear_correction),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("beam {name} must be positive, got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(invalid(format!(
                "poisson_ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if self.damping_w.is_some_and(|c| !(c >= 0.0)) || !(self.damping_beta >= 0.0) {
            return Err(invalid("beam damping coefficients must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Boundary {
    SimplySupported,
    /// Simple supports plus a linear rotary spring (N m/rad) at the right end.
    SimplySupportedRotarySpring { rotary_stiffness: f64 },
}

impl Boundary {
    fn validate(&self) -> Result<()> {
        if let Boundary::SimplySupportedRotarySpring { rotary_stiffness } = *self {
            if !(rotary_stiffness > 0.0) {
                return Err(invalid(format!(
                    "rotary stiffness must be positive, got {rotary_stiffness}"
                )));
            }
        }
        Ok(())
    }
}

type Elem = [[f64; 4]; 4];

fn euler_bernoulli_element(p: &BeamProperties, le: f64) -> (Elem, Elem) {
    let ei = p.youngs_modulus * p.inertia();
    let k = ei / le.powi(3);
    let l = le;
    let l2 = le * le;
    let stiff = [
        [12.0 * k, 6.0 * l * k, -12.0 * k, 6.0 * l * k],
        [6.0 * l * k, 4.0 * l2 * k, -6.0 * l * k, 2.0 * l2 * k],
        [-12.0 * k, -6.0 * l * k, 12.0 * k, -6.0 * l * k],
        [6.0 * l * k, 2.0 * l2 * k, -6.0 * l * k, 4.0 * l2 * k],
    ];
    let c = p.density * p.area() * le / 420.0;
    let mass = [
        [156.0 * c, 22.0 * l * c, 54.0 * c, -13.0 * l * c],
        [22.0 * l * c, 4.0 * l2 * c, 13.0 * l * c, -3.0 * l2 * c],
        [54.0 * c, 13.0 * l * c, 156.0 * c, -22.0 * l * c],
        [-13.0 * l * c, -3.0 * l2 * c, -22.0 * l * c, 4.0 * l2 * c],
    ];
    (stiff, mass)
}

/// Two-node Timoshenko element with interdependent (shear-linked) cubic
/// interpolation; reproduces exact static stiffness and is free of locking.
fn timoshenko_element(p: &BeamProperties, le: f64) -> (Elem, Elem) {
    let ei = p.youngs_modulus * p.inertia();
    let kga = p.shear_correction * p.shear_modulus() * p.area();
    let phi = 12.0 * ei / (kga * le * le);
    let l = le;
    let l2 = le * le;

    let k = ei / ((1.0 + phi) * le.powi(3));
    let stiff = [
        [12.0 * k, 6.0 * l * k, -12.0 * k, 6.0 * l * k],
        [6.0 * l * k, (4.0 + phi) * l2 * k, -6.0 * l * k, (2.0 - phi) * l2 * k],
        [-12.0 * k, -6.0 * l * k, 12.0 * k, -6.0 * l * k],
        [6.0 * l * k, (2.0 - phi) * l2 * k, -6.0 * l * k, (4.0 + phi) * l2 * k],
    ];

    let p2 = phi * phi;
    let ct = p.density * p.area() * le / (210.0 * (1.0 + phi).powi(2));
    let t11 = (70.0 * p2 + 147.0 * phi + 78.0) * ct;
    let t12 = (35.0 * p2 + 77.0 * phi + 44.0) * l / 4.0 * ct;
    let t13 = (35.0 * p2 + 63.0 * phi + 27.0) * ct;
    let t14 = -(35.0 * p2 + 63.0 * phi + 26.0) * l / 4.0 * ct;
    let t22 = (7.0 * p2 + 14.0 * phi + 8.0) * l2 / 4.0 * ct;
    let t24 = -(7.0 * p2 + 14.0 * phi + 6.0) * l2 / 4.0 * ct;
    let translational = [
        [t11, t12, t13, t14],
        [t12, t22, -t14, t24],
        [t13, -t14, t11, -t12],
        [t14, t24, -t12, t22],
    ];

    let cr = p.density * p.inertia() / (30.0 * (1.0 + phi).powi(2) * le);
    let r11 = 36.0 * cr;
    let r12 = (3.0 - 15.0 * phi) * l * cr;
    let r22 = (10.0 * p2 + 5.0 * phi + 4.0) * l2 * cr;
    let r24 = (5.0 * p2 - 5.0 * phi - 1.0) * l2 * cr;
    let rotary = [
        [r11, r12, -r11, r12],
        [r12, r22, -r12, r24],
        [-r11, -r12, r11, -r12],
        [r12, r24, -r12, r22],
    ];

    let mut mass = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            mass[a][b] = translational[a][b] + rotary[a][b];
        }
    }
    (stiff, mass)
}

fn assemble_beam(
    props: &BeamProperties,
    n_elements: usize,
    bc: &Boundary,
    element: fn(&BeamProperties, f64) -> (Elem, Elem),
    c_beta: f64,
) -> Result<FeModel> {
    props.validate()?;
    bc.validate()?;
    if n_elements < 4 {
        return Err(invalid(format!("need at least 4 elements, got {n_elements}")));
    }
    let n_nodes = n_elements + 1;
    let n_full = 2 * n_nodes;
    let le = props.length / n_elements as f64;

    let mut k = DMatrix::zeros(n_full, n_full);
    let mut m = DMatrix::zeros(n_full, n_full);
    let mut c = DMatrix::zeros(n_full, n_full);
    let (ke, me) = element(props, le);
    let c_w = props.c_w();
    for e in 0..n_elements {
        let dofs = [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3];
        scatter(&mut k, &ke, dofs);
        scatter(&mut m, &me, dofs);
        // lumped viscous damping, half the element length to each node
        for node in [e, e + 1] {
            c[(2 * node, 2 * node)] += 0.5 * c_w * le;
            c[(2 * node + 1, 2 * node + 1)] += 0.5 * c_beta * le;
        }
    }
    if let Boundary::SimplySupportedRotarySpring { rotary_stiffness } = *bc {
        k[(n_full - 1, n_full - 1)] += rotary_stiffness;
    }

    // pinned supports: transverse displacement at both ends
    let constrained = [0, 2 * (n_nodes - 1)];
    let keep: Vec<usize> = (0..n_full).filter(|i| !constrained.contains(i)).collect();
    let dofs = keep
        .iter()
        .map(|&g| DofInfo {
            x: (g / 2) as f64 * le,
            kind: if g % 2 == 0 {
                DofKind::Translation
            } else {
                DofKind::Rotation
            },
            node: g / 2,
        })
        .collect();
    let model = FeModel {
        mass: eliminate(&m, &keep),
        damping: eliminate(&c, &keep),
        stiffness: eliminate(&k, &keep),
        dofs,
        element_count: n_elements,
    };
    model.validate()?;
    Ok(model)
}

/// Hermite-cubic Euler-Bernoulli beam: DOFs (w, w') per node, consistent
/// mass, lumped `c_w` damping on the deflections.
pub fn assemble_euler_bernoulli(
    props: &BeamProperties,
    n_elements: usize,
    bc: &Boundary,
) -> Result<FeModel> {
    assemble_beam(props, n_elements, bc, euler_bernoulli_element, 0.0)
}

/// Timoshenko beam with shear deformation and rotary inertia: DOFs (w, beta)
/// per node, lumped `c_w` / `c_beta` damping.
pub fn assemble_timoshenko(
    props: &BeamProperties,
    n_elements: usize,
    bc: &Boundary,
) -> Result<FeModel> {
    assemble_beam(props, n_elements, bc, timoshenko_element, props.damping_beta)
}
