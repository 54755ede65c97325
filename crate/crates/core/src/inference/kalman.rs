use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::gp::DiscreteSsm;
use crate::linalg::{spd_solve, symmetrize};

/// `y_k = C z_k + v_k`, `v_k ~ N(0, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl MeasurementModel {
    /// Displacement sensors: `C = [S Phi, 0, 0]`, `R = sigma^2 I`.
    pub fn displacement(sensor_rows: &DMatrix<f64>, state_dim: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("measurement noise std must be positive, got {sigma}")));
        }
        let (ny, m) = sensor_rows.shape();
        if state_dim < m {
            return Err(invalid("state smaller than the mode count"));
        }
        let mut c = DMatrix::zeros(ny, state_dim);
        c.view_mut((0, 0), (ny, m)).copy_from(sensor_rows);
        Ok(MeasurementModel {
            c,
            r: DMatrix::identity(ny, ny) * (sigma * sigma),
        })
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    /// Zero mean, `sigma_q^2` on the `2m` modal states and the stationary
    /// variance `alpha_i^2` on each latent force.
    pub fn rest_prior(modes: usize, sigma_q2: f64, amplitudes: &[f64]) -> Self {
        let n = 2 * modes + amplitudes.len();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..2 * modes {
            cov[(i, i)] = sigma_q2;
        }
        for (i, a) in amplitudes.iter().enumerate() {
            cov[(2 * modes + i, 2 * modes + i)] = a * a;
        }
        GaussianBelief {
            mean: DVector::zeros(n),
            cov,
        }
    }
}

/// Filter results for every step `k = 0..N_t`. `predicted[k]` is the belief
/// before `y_k` is assimilated; for `k = 0` it is the prior.
#[derive(Clone, Debug)]
pub struct FilterOutput {
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub innovations: Vec<DVector<f64>>,
    pub innovation_covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

fn check_dims(
    ssm: &DiscreteSsm,
    meas: &MeasurementModel,
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    prior: &GaussianBelief,
) -> Result<()> {
    let n = ssm.state_dim();
    if meas.c.ncols() != n || prior.mean.len() != n || prior.cov.shape() != (n, n) {
        return Err(invalid("state dimensions of model, measurement and prior differ"));
    }
    if y.nrows() != meas.outputs() || meas.r.shape() != (y.nrows(), y.nrows()) {
        return Err(invalid("measurement rows do not match the observation model"));
    }
    if p.nrows() != ssm.b.ncols() || p.ncols() != y.ncols() {
        return Err(invalid("input series is not aligned with the measurements"));
    }
    if y.ncols() == 0 {
        return Err(invalid("no measurements"));
    }
    Ok(())
}

/// One measurement update; returns `(mean, cov, e, S, log-density)`.
#[allow(clippy::type_complexity)]
fn update(
    meas: &MeasurementModel,
    y: DVector<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    k: usize,
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>, f64)> {
    let n = mean.len();
    let e = y - &meas.c * mean;
    let pct = cov * meas.c.transpose();
    let mut s = &meas.c * &pct + &meas.r;
    symmetrize(&mut s);
    let (gain_t, ll) = gain_and_density(&s, &pct, &e, k)?;
    let gain = gain_t.transpose();
    let new_mean = mean + &gain * &e;
    let ikc = DMatrix::identity(n, n) - &gain * &meas.c;
    let mut new_cov = &ikc * cov * ikc.transpose() + &gain * &meas.r * gain.transpose();
    symmetrize(&mut new_cov);
    Ok((new_mean, new_cov, e, s, ll))
}

/// `K^T = S^{-1} (P C^T)^T` and the Gaussian log-density of `e`.
fn gain_and_density(
    s: &DMatrix<f64>,
    pct: &DMatrix<f64>,
    e: &DVector<f64>,
    k: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let ny = s.nrows();
    let chol = s.clone().cholesky().ok_or_else(|| {
        Error::NumericalFailure(format!("innovation covariance not positive definite at step {k}"))
    })?;
    let gain_t = chol.solve(&pct.transpose());
    let w = chol.solve(e);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ll = -0.5 * (ny as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + e.dot(&w));
    if !ll.is_finite() || gain_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "non-finite innovation density at step {k}"
        )));
    }
    Ok((gain_t, ll))
}

fn predict(
    ssm: &DiscreteSsm,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    input: DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = &ssm.a * mean + &ssm.b * input;
    let mut p = &ssm.a * cov * ssm.a.transpose() + &ssm.q;
    symmetrize(&mut p);
    (m, p)
}

/// Kalman filter over `y_0..y_{N_t-1}`: update with `y_0` against the prior,
/// then for each later step predict with the input held over the preceding
/// interval (`p_{k-1}`) and update with `y_k`.
pub fn kalman_filter(
    ssm: &DiscreteSsm,
    meas: &MeasurementModel,
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    prior: &GaussianBelief,
) -> Result<FilterOutput> {
    check_dims(ssm, meas, y, p, prior)?;
    let nt = y.ncols();
    let mut out = FilterOutput {
        predicted_means: Vec::with_capacity(nt),
        predicted_covs: Vec::with_capacity(nt),
        filtered_means: Vec::with_capacity(nt),
        filtered_covs: Vec::with_capacity(nt),
        innovations: Vec::with_capacity(nt),
        innovation_covs: Vec::with_capacity(nt),
        log_likelihood: 0.0,
    };
    let (mut mean, mut cov) = (prior.mean.clone(), prior.cov.clone());
    for k in 0..nt {
        if k > 0 {
            (mean, cov) = predict(ssm, &mean, &cov, p.column(k - 1).into_owned());
        }
        out.predicted_means.push(mean.clone());
        out.predicted_covs.push(cov.clone());
        let (m, c, e, s, ll) = update(meas, y.column(k).into_owned(), &mean, &cov, k)?;
        out.log_likelihood += ll;
        out.innovations.push(e);
        out.innovation_covs.push(s);
        mean = m;
        cov = c;
        out.filtered_means.push(mean.clone());
        out.filtered_covs.push(cov.clone());
    }
    Ok(out)
}

fn nonzeros(a: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut nz = Vec::new();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != 0.0 {
                nz.push((i, j, a[(i, j)]));
            }
        }
    }
    nz
}

/// In-place lower Cholesky factor of the column-major `n x n` matrix `a`;
/// returns `log det`, or `None` when `a` is not positive definite.
fn cholesky_in_place(a: &mut [f64], n: usize) -> Option<f64> {
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = a[j + j * n];
        for k in 0..j {
            d -= a[j + k * n] * a[j + k * n];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j + j * n] = d;
        log_det += 2.0 * d.ln();
        for i in (j + 1)..n {
            let mut v = a[i + j * n];
            for k in 0..j {
                v -= a[i + k * n] * a[j + k * n];
            }
            a[i + j * n] = v / d;
        }
    }
    Some(log_det)
}

/// Solves `L L^T x = b` in place for the factor from [`cholesky_in_place`].
fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i + k * n] * b[k];
        }
        b[i] = v / l[i + i * n];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= l[k + i * n] * b[k];
        }
        b[i] = v / l[i + i * n];
    }
}

/// Log marginal likelihood only, without storing the trajectory.
///
/// With `steady_tol > 0` the covariance recursion stops once the predicted
/// covariance changes by less than `steady_tol` (relative, max-abs) between
/// steps; the frozen gain and innovation covariance are reused afterwards.
///
/// This runs inside the optimizer loop, so it works on raw column-major
/// buffers, skips the zeros of `A` (modes evolve independently) and `C`
/// (only modal displacements are observed) and uses the `P - K S K^T`
/// update. [`kalman_filter`] keeps the Joseph form.
pub fn log_likelihood(
    ssm: &DiscreteSsm,
    meas: &MeasurementModel,
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    prior: &GaussianBelief,
    steady_tol: f64,
) -> Result<f64> {
    check_dims(ssm, meas, y, p, prior)?;
    let nt = y.ncols();
    let n = ssm.state_dim();
    let ny = meas.outputs();
    let nu = p.nrows();
    let a_nz = nonzeros(&ssm.a);
    let b_nz = nonzeros(&ssm.b);
    let c_nz = nonzeros(&meas.c);
    let q = ssm.q.as_slice();
    let r = meas.r.as_slice();
    let ys = y.as_slice();
    let ps = p.as_slice();
    let log_2pi = ny as f64 * (2.0 * std::f64::consts::PI).ln();

    let mut mean: Vec<f64> = prior.mean.iter().copied().collect();
    let mut next = vec![0.0; n];
    let mut cov: Vec<f64> = prior.cov.as_slice().to_vec();
    let mut prev = vec![0.0; n * n];
    let mut t = vec![0.0; n * n];
    let mut tt = vec![0.0; n * n];
    let mut pct_t = vec![0.0; ny * n];
    let mut pct = vec![0.0; n * ny];
    let mut l = vec![0.0; ny * ny];
    // G = S^{-1} (P C^T)^T with its rows contiguous; the gain is G^T
    let mut g = vec![0.0; ny * n];
    let mut e = vec![0.0; ny];
    let mut w = vec![0.0; ny];
    let mut have_prev = false;
    let mut frozen = false;
    let mut log_det = 0.0;
    let mut total = 0.0;

    for k in 0..nt {
        if k > 0 {
            next.iter_mut().for_each(|v| *v = 0.0);
            for &(i, j, v) in &a_nz {
                next[i] += v * mean[j];
            }
            let pk = &ps[(k - 1) * nu..k * nu];
            for &(i, j, v) in &b_nz {
                next[i] += v * pk[j];
            }
            std::mem::swap(&mut mean, &mut next);
            if !frozen {
                // T = P A^T; A P A^T = T^T A^T since P is symmetric
                t.iter_mut().for_each(|v| *v = 0.0);
                axpy_columns(&mut t, &cov, n, &a_nz);
                transpose_into(&t, &mut tt, n, n);
                cov.copy_from_slice(q);
                axpy_columns(&mut cov, &tt, n, &a_nz);
                symmetrize_slice(&mut cov, n);
            }
        }
        e.copy_from_slice(&ys[k * ny..(k + 1) * ny]);
        for &(i, j, v) in &c_nz {
            e[i] -= v * mean[j];
        }
        if !frozen {
            if steady_tol > 0.0 {
                if have_prev {
                    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
                    let diff = cov
                        .iter()
                        .zip(&prev)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    frozen = diff <= steady_tol * scale;
                }
                prev.copy_from_slice(&cov);
                have_prev = true;
            }
            // P C^T, then S = R + C P C^T = R + (P C^T)^T C^T
            pct.iter_mut().for_each(|v| *v = 0.0);
            axpy_columns(&mut pct, &cov, n, &c_nz);
            transpose_into(&pct, &mut pct_t, n, ny);
            l.copy_from_slice(r);
            axpy_columns(&mut l, &pct_t, ny, &c_nz);
            symmetrize_slice(&mut l, ny);
            log_det = cholesky_in_place(&mut l, ny).ok_or_else(|| {
                Error::NumericalFailure(format!(
                    "innovation covariance not positive definite at step {k}"
                ))
            })?;
            // rows of G (length n, contiguous) by substitution on all
            // right-hand sides at once
            g.copy_from_slice(&pct);
            for c in 0..ny {
                for k in 0..c {
                    let lck = l[c + k * ny];
                    let (head, tail) = g.split_at_mut(c * n);
                    let src = &head[k * n..(k + 1) * n];
                    for (x, v) in tail[..n].iter_mut().zip(src) {
                        *x -= lck * v;
                    }
                }
                let inv = 1.0 / l[c + c * ny];
                g[c * n..(c + 1) * n].iter_mut().for_each(|x| *x *= inv);
            }
            for c in (0..ny).rev() {
                for k in (c + 1)..ny {
                    let lkc = l[k + c * ny];
                    let (head, tail) = g.split_at_mut(k * n);
                    let src = &tail[..n];
                    for (x, v) in head[c * n..(c + 1) * n].iter_mut().zip(src) {
                        *x -= lkc * v;
                    }
                }
                let inv = 1.0 / l[c + c * ny];
                g[c * n..(c + 1) * n].iter_mut().for_each(|x| *x *= inv);
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite innovation density at step {k}"
                )));
            }
        }
        w.copy_from_slice(&e);
        cholesky_solve(&l, ny, &mut w);
        let quad: f64 = e.iter().zip(&w).map(|(a, b)| a * b).sum();
        total += -0.5 * (log_2pi + log_det + quad);
        for (c, &ec) in e.iter().enumerate() {
            for (m, gv) in mean.iter_mut().zip(&g[c * n..(c + 1) * n]) {
                *m += gv * ec;
            }
        }
        if !frozen {
            // P <- P - (P C^T) G
            for b in 0..n {
                let colb = &mut cov[b * n..(b + 1) * n];
                for c in 0..ny {
                    let gv = g[c * n + b];
                    if gv != 0.0 {
                        for (x, v) in colb.iter_mut().zip(&pct[c * n..(c + 1) * n]) {
                            *x -= v * gv;
                        }
                    }
                }
            }
            symmetrize_slice(&mut cov, n);
        }
    }
    if !total.is_finite() {
        return Err(Error::NumericalFailure("log-likelihood is not finite".into()));
    }
    Ok(total)
}

/// `out[:, i] += v * src[:, j]` for every `(i, j, v)`: `out += src A^T`
/// for a sparse `A`, both column-major with `rows` rows.
fn axpy_columns(out: &mut [f64], src: &[f64], rows: usize, a_nz: &[(usize, usize, f64)]) {
    for &(i, j, v) in a_nz {
        let s = &src[j * rows..(j + 1) * rows];
        for (x, y) in out[i * rows..(i + 1) * rows].iter_mut().zip(s) {
            *x += v * y;
        }
    }
}

/// Column-major `rows x cols` into its `cols x rows` transpose.
fn transpose_into(a: &[f64], out: &mut [f64], rows: usize, cols: usize) {
    for (j, col) in a.chunks_exact(rows).enumerate().take(cols) {
        for (i, v) in col.iter().enumerate() {
            out[j + i * cols] = *v;
        }
    }
}

fn symmetrize_slice(a: &mut [f64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[i + j * n] + a[j + i * n]);
            a[i + j * n] = v;
            a[j + i * n] = v;
        }
    }
}

/// Posterior over the whole record, one column per step.
#[derive(Clone, Debug)]
pub struct SmoothedTrajectory {
    pub means: DMatrix<f64>,
    pub covs: Vec<DMatrix<f64>>,
    pub filtered_means: DMatrix<f64>,
    pub filtered_variances: DMatrix<f64>,
    pub modes: usize,
}

impl SmoothedTrajectory {
    pub fn q(&self) -> DMatrix<f64> {
        self.means.rows(0, self.modes).into_owned()
    }

    pub fn q_dot(&self) -> DMatrix<f64> {
        self.means.rows(self.modes, self.modes).into_owned()
    }

    pub fn eta(&self) -> DMatrix<f64> {
        let n = self.means.nrows();
        self.means.rows(2 * self.modes, n - 2 * self.modes).into_owned()
    }

    /// Marginal variances, one row per state.
    pub fn variances(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.means.nrows(), self.covs.len(), |i, k| self.covs[k][(i, i)])
    }
}

/// Rauch-Tung-Striebel backward pass.
pub fn rts_smoother(ssm: &DiscreteSsm, filt: &FilterOutput) -> Result<SmoothedTrajectory> {
    let nt = filt.filtered_means.len();
    let n = ssm.state_dim();
    let mut means = DMatrix::zeros(n, nt);
    let mut covs = vec![DMatrix::zeros(n, n); nt];
    let mut ms = filt.filtered_means[nt - 1].clone();
    let mut ps = filt.filtered_covs[nt - 1].clone();
    means.set_column(nt - 1, &ms);
    covs[nt - 1] = ps.clone();
    for k in (0..nt - 1).rev() {
        let pf = &filt.filtered_covs[k];
        let ppred = &filt.predicted_covs[k + 1];
        // G = P_f A^T P_pred^{-1}
        let gt = spd_solve(ppred, &(&ssm.a * pf)).ok_or_else(|| {
            Error::NumericalFailure(format!("singular predicted covariance at step {}", k + 1))
        })?;
        let g = gt.transpose();
        ms = &filt.filtered_means[k] + &g * (&ms - &filt.predicted_means[k + 1]);
        ps = pf + &g * (&ps - ppred) * g.transpose();
        symmetrize(&mut ps);
        means.set_column(k, &ms);
        covs[k] = ps.clone();
    }
    let filtered_means = DMatrix::from_fn(n, nt, |i, k| filt.filtered_means[k][i]);
    let filtered_variances = DMatrix::from_fn(n, nt, |i, k| filt.filtered_covs[k][(i, i)]);
    Ok(SmoothedTrajectory {
        means,
        covs,
        filtered_means,
        filtered_variances,
        modes: ssm.modes,
    })
}
