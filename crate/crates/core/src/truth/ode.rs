//! Fixed-step Runge-Kutta integrators.

use nalgebra::{DMatrix, DVector};

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4_step<F>(f: &F, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Integrating-factor (Lawson) RK4 for `y' = A y + n(y)` with the
/// exponentials `e_half = expm(A h/2)` and `e_full = expm(A h)` precomputed.
/// The stiff linear part is propagated exactly.
pub struct LawsonRk4 {
    pub e_half: DMatrix<f64>,
    pub e_full: DMatrix<f64>,
    pub h: f64,
}

impl LawsonRk4 {
    pub fn new(a: &DMatrix<f64>, h: f64) -> Self {
        LawsonRk4 {
            e_half: crate::linalg::expm(&(a * (0.5 * h))),
            e_full: crate::linalg::expm(&(a * h)),
            h,
        }
    }

    pub fn step<N>(&self, n: &N, y: &DVector<f64>) -> DVector<f64>
    where
        N: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let h = self.h;
        let ey = &self.e_half * y;
        let k1 = n(y);
        let k2 = n(&(&ey + &self.e_half * &k1 * (0.5 * h)));
        let k3 = n(&(&ey + &k2 * (0.5 * h)));
        let k4 = n(&(&self.e_full * y + &self.e_half * &k3 * h));
        &self.e_full * y
            + (&self.e_full * k1 + &self.e_half * (k2 + k3) * 2.0 + k4) * (h / 6.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // damped 2-DOF chain under smooth forcing
    fn rhs(t: f64, y: &DVector<f64>) -> DVector<f64> {
        let (u1, u2, v1, v2) = (y[0], y[1], y[2], y[3]);
        DVector::from_vec(vec![
            v1,
            v2,
            -2.0 * u1 + u2 - 0.1 * v1 + (1.3 * t).sin(),
            u1 - u2 - 0.05 * v2,
        ])
    }

    fn integrate(h: f64, t_end: f64) -> DVector<f64> {
        let mut y = DVector::from_vec(vec![0.1, 0.0, 0.0, 0.2]);
        let n = (t_end / h).round() as usize;
        for k in 0..n {
            y = rk4_step(&rhs, k as f64 * h, &y, h);
        }
        y
    }

    #[test]
    fn rk4_fourth_order() {
        let t_end = 5.0;
        let h = 0.1;
        let reference = integrate(h / 8.0, t_end);
        let e1 = (integrate(h, t_end) - &reference).norm();
        let e2 = (integrate(h / 2.0, t_end) - &reference).norm();
        let ratio = e1 / e2;
        assert!((ratio / 16.0 - 1.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn lawson_exact_for_linear_part() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -400.0, -0.2]);
        let h = 0.01;
        let step = LawsonRk4::new(&a, h);
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let zero = |y: &DVector<f64>| DVector::zeros(y.len());
        let mut y = y0.clone();
        for _ in 0..100 {
            y = step.step(&zero, &y);
        }
        let exact = crate::linalg::expm(&(&a * 1.0)) * y0;
        assert!((y - exact).norm() < 1e-12);
    }

    #[test]
    fn lawson_fourth_order_on_cubic_oscillator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -25.0, -0.3]);
        let n = |y: &DVector<f64>| DVector::from_vec(vec![0.0, -4.0 * y[0].powi(3)]);
        let run = |h: f64| {
            let s = LawsonRk4::new(&a, h);
            let mut y = DVector::from_vec(vec![1.0, 0.0]);
            for _ in 0..(2.0 / h).round() as usize {
                y = s.step(&n, &y);
            }
            y
        };
        let reference = run(0.0025);
        let e1 = (run(0.02) - &reference).norm();
        let e2 = (run(0.01) - &reference).norm();
        let ratio = e1 / e2;
        assert!((ratio / 16.0 - 1.0).abs() < 0.3, "ratio {ratio}");
    }
}
