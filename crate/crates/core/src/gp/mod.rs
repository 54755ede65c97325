//! Gaussian-process latent forces as state-space blocks, the augmented
//! modal system and its zero-order-hold discretization.

mod kernel;

pub use kernel::{matern12_spectral_density, ou_block, GpHyperparams, LatentKernel, Matern12};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{expm, symmetrize};
use crate::modal::ModalBasis;

/// Default process-noise level on the displacement/velocity blocks.
pub const DEFAULT_JITTER: f64 = 1e-12;

/// Continuous-time linear system `dz = (A z + B p) dt + dw`, `E[dw dw^T] = Q dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSsm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Number of structural modes `m`; the state is `[q, q', s]`.
    pub modes: usize,
}

/// Zero-order-hold discretization: `z_{k+1} = A z_k + B p_k + w_k`,
/// `w_k ~ N(0, Q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSsm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub dt: f64,
    pub modes: usize,
}

impl DiscreteSsm {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Augmented system from modal frequencies/damping and one kernel per mode.
///
/// Block layout `[[0, I, 0], [-Omega^2, -Xi, -H], [0, 0, F]]`: the latent
/// force enters the modal equation with a plus sign on the left.
pub fn assemble_augmented_with(
    frequencies: &[f64],
    damping: &[f64],
    kernels: &[&dyn LatentKernel],
    jitter: f64,
) -> Result<ContinuousSsm> {
    let m = frequencies.len();
    if damping.len() != m || kernels.len() != m {
        return Err(invalid(format!(
            "augmented system needs {m} damping entries and kernels, got {} and {}",
            damping.len(),
            kernels.len()
        )));
    }
    if !(jitter >= 0.0) {
        return Err(invalid("jitter must be non-negative"));
    }
    let gp_dim: usize = kernels.iter().map(|k| k.state_dim()).sum();
    let n = 2 * m + gp_dim;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut q = DMatrix::zeros(n, n);
    for i in 0..m {
        a[(i, m + i)] = 1.0;
        a[(m + i, i)] = -frequencies[i] * frequencies[i];
        a[(m + i, m + i)] = -damping[i];
        b[(m + i, i)] = 1.0;
    }
    for i in 0..2 * m {
        q[(i, i)] = jitter;
    }
    let mut off = 2 * m;
    for (i, k) in kernels.iter().enumerate() {
        let d = k.state_dim();
        let h = k.output();
        for c in 0..d {
            a[(m + i, off + c)] = -h[(0, c)];
        }
        a.view_mut((off, off), (d, d)).copy_from(&k.drift());
        let l = k.noise_gain();
        let lq = &l * l.transpose() * k.diffusion();
        q.view_mut((off, off), (d, d)).copy_from(&lq);
        off += d;
    }
    Ok(ContinuousSsm { a, b, q, modes: m })
}

/// Matérn-1/2 latent forces on every retained mode of `basis`.
pub fn assemble_augmented(
    basis: &ModalBasis,
    theta: &GpHyperparams,
    jitter: f64,
) -> Result<ContinuousSsm> {
    theta.validate()?;
    if theta.modes() != basis.retained() {
        return Err(invalid(format!(
            "{} hyperparameter pairs for {} modes",
            theta.modes(),
            basis.retained()
        )));
    }
    let kernels = theta.kernels();
    let refs: Vec<&dyn LatentKernel> = kernels.iter().map(|k| k as &dyn LatentKernel).collect();
    assemble_augmented_with(&basis.frequencies, &basis.damping, &refs, jitter)
}

/// The plain `[q, q']` modal system without latent forces or process noise.
pub fn modal_state_space(frequencies: &[f64], damping: &[f64]) -> Result<ContinuousSsm> {
    let m = frequencies.len();
    if damping.len() != m {
        return Err(invalid("frequency and damping lists differ in length"));
    }
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    let mut b = DMatrix::zeros(2 * m, m);
    for i in 0..m {
        a[(i, m + i)] = 1.0;
        a[(m + i, i)] = -frequencies[i] * frequencies[i];
        a[(m + i, m + i)] = -damping[i];
        b[(m + i, i)] = 1.0;
    }
    Ok(ContinuousSsm {
        a,
        b,
        q: DMatrix::zeros(2 * m, 2 * m),
        modes: m,
    })
}

/// `(A, B)` of the zero-order-hold discretization, read off
/// `expm([[A_c, B_c], [0, 0]] dt)` so `A_c` is never inverted.
pub fn zoh_transition(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    let p = b_c.ncols();
    let mut big = DMatrix::zeros(n + p, n + p);
    big.view_mut((0, 0), (n, n)).copy_from(&(a_c * dt));
    big.view_mut((0, n), (n, p)).copy_from(&(b_c * dt));
    let e = expm(&big);
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure("matrix exponential overflowed".into()));
    }
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, p)).into_owned(),
    ))
}

/// `Q_d = int_0^dt expm(A s) Q expm(A s)^T ds` by Van Loan's block exponential.
///
/// The block exponential contains `expm(-A dt)`, which overflows for fast
/// stable blocks, so it is evaluated on `dt / 2^s` with `||A dt|| / 2^s <= 1`
/// and doubled back up with `Q(2h) = Q(h) + e^{Ah} Q(h) e^{Ah}^T`.
pub fn van_loan_covariance(a_c: &DMatrix<f64>, q_c: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let n = a_c.nrows();
    let norm = crate::linalg::inf_norm(a_c) * dt;
    let squarings = if norm > 1.0 { norm.log2().ceil() as i32 } else { 0 };
    let h = dt / 2f64.powi(squarings);
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-a_c * h));
    big.view_mut((0, n), (n, n)).copy_from(&(q_c * h));
    big.view_mut((n, n), (n, n)).copy_from(&(a_c.transpose() * h));
    let e = expm(&big);
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure("Van Loan exponential overflowed".into()));
    }
    let mut phi = e.view((n, n), (n, n)).transpose();
    let mut qd = &phi * e.view((0, n), (n, n));
    symmetrize(&mut qd);
    for _ in 0..squarings {
        qd = &qd + &phi * &qd * phi.transpose();
        symmetrize(&mut qd);
        phi = &phi * &phi;
    }
    if !qd.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure("discrete process covariance overflowed".into()));
    }
    Ok(qd)
}

/// Index sets that `A` and `Q` never couple (connected components of their
/// joint sparsity graph), each sorted.
fn coupled_blocks(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 || q[(i, j)] != 0.0 {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut index = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if index[r] == usize::MAX {
            index[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[index[r]].push(i);
    }
    blocks
}

pub fn discretize(ssm: &ContinuousSsm, dt: f64) -> Result<DiscreteSsm> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("sample interval must be positive, got {dt}")));
    }
    let n = ssm.a.nrows();
    let nu = ssm.b.ncols();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, nu);
    let mut q = DMatrix::zeros(n, n);
    // uncoupled blocks (one per mode for the augmented system) are
    // discretized separately; exact, and far cheaper than one big exponential
    for block in coupled_blocks(&ssm.a, &ssm.q) {
        let k = block.len();
        let sub = |m: &DMatrix<f64>| DMatrix::from_fn(k, k, |i, j| m[(block[i], block[j])]);
        let bb = DMatrix::from_fn(k, nu, |i, j| ssm.b[(block[i], j)]);
        let (ab, bd) = zoh_transition(&sub(&ssm.a), &bb, dt)?;
        let qb = van_loan_covariance(&sub(&ssm.a), &sub(&ssm.q), dt)?;
        for (i, &gi) in block.iter().enumerate() {
            for (j, &gj) in block.iter().enumerate() {
                a[(gi, gj)] = ab[(i, j)];
                q[(gi, gj)] = qb[(i, j)];
            }
            for j in 0..nu {
                b[(gi, j)] = bd[(i, j)];
            }
        }
    }
    Ok(DiscreteSsm {
        a,
        b,
        q,
        dt,
        modes: ssm.modes,
    })
}
