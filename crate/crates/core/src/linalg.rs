//! Dense linear-algebra helpers shared by the structural, state-space and
//! filtering code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrix exponential (scaling and squaring with Padé approximants).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().exp()
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves the symmetric-definite generalized eigenproblem `K v = λ M v`.
///
/// Eigenvalues are returned ascending, eigenvectors are M-orthonormal.
pub fn generalized_symmetric_eigen(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    if k.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "eigenproblem dimensions K {}x{}, M {}x{}",
            k.nrows(),
            k.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::NumericalFailure("mass matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
    let mut reduced = &l_inv * k * l_inv.transpose();
    symmetrize(&mut reduced);
    let eig = nalgebra::SymmetricEigen::try_new(reduced, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let vectors = l_inv.transpose() * &eig.eigenvectors;
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut sorted = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &vectors.column(src));
    }
    Ok((values, sorted))
}

/// Solves `A X = B` for symmetric positive (semi)definite `A`.
///
/// `A` is Jacobi-scaled before the Cholesky factorization, which keeps the
/// solve usable when the diagonal spans many orders of magnitude (latent
/// force variances next to displacement variances). Falls back to LU.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = a[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * d[i] * d[j]);
    let mut rhs = b.clone();
    for i in 0..n {
        rhs.row_mut(i).scale_mut(d[i]);
    }
    let mut x = match scaled.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => scaled.lu().solve(&rhs)?,
    };
    for i in 0..n {
        x.row_mut(i).scale_mut(d[i]);
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// `log det A` for symmetric positive definite `A`.
pub fn log_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Extracts a contiguous block.
pub fn block(a: &DMatrix<f64>, r0: usize, c0: usize, nr: usize, nc: usize) -> DMatrix<f64> {
    a.view((r0, c0), (nr, nc)).into_owned()
}
