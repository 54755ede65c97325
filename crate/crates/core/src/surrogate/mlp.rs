use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One sigmoid hidden layer, linear output: `y = W2 s(W1 x + b1) + b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Parameter gradients, same shapes as [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpGrad {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl Mlp {
    /// Uniform fan-in initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let r1 = 1.0 / (inputs as f64).sqrt();
        let r2 = 1.0 / (hidden as f64).sqrt();
        let mut u = |r: f64| rng.gen_range(-r..r);
        Mlp {
            w1: DMatrix::from_fn(hidden, inputs, |_, _| u(r1)),
            b1: DVector::from_fn(hidden, |_, _| u(r1)),
            w2: DMatrix::from_fn(outputs, hidden, |_, _| u(r2)),
            b2: DVector::from_fn(outputs, |_, _| u(r2)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w2.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.b1.len() != h || self.w2.ncols() != h || self.b2.len() != self.w2.nrows() {
            return Err(invalid("inconsistent network shapes"));
        }
        let finite = self
            .w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("network weights are not finite"));
        }
        Ok(())
    }

    fn hidden_act(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.w1 * x;
        for mut c in z.column_iter_mut() {
            c += &self.b1;
        }
        z.apply(|v| *v = sigmoid(*v));
        z
    }

    /// Columns of `x` are samples.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let a = self.hidden_act(x);
        let mut y = &self.w2 * a;
        for mut c in y.column_iter_mut() {
            c += &self.b2;
        }
        y
    }

    pub fn forward_one(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut z = &self.w1 * x + &self.b1;
        z.apply(|v| *v = sigmoid(*v));
        &self.w2 * z + &self.b2
    }

    /// `dy/dx` at one input, `outputs x inputs`.
    pub fn input_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut a = &self.w1 * x + &self.b1;
        a.apply(|v| *v = sigmoid(*v));
        let d = a.map(|s| s * (1.0 - s));
        let mut w1s = self.w1.clone();
        for (i, mut row) in w1s.row_iter_mut().enumerate() {
            row *= d[i];
        }
        &self.w2 * w1s
    }

    /// Squared Frobenius norm of the weight matrices (biases excluded).
    pub fn weight_norm2(&self) -> f64 {
        self.w1.norm_squared() + self.w2.norm_squared()
    }

    /// Loss `mean((y - t)^2) + lambda * (|W1|^2 + |W2|^2)` over all entries
    /// of the batch and its parameter gradient.
    pub fn loss_and_gradient(
        &self,
        x: &DMatrix<f64>,
        t: &DMatrix<f64>,
        lambda: f64,
    ) -> (f64, MlpGrad) {
        let a = self.hidden_act(x);
        let mut y = &self.w2 * &a;
        for mut c in y.column_iter_mut() {
            c += &self.b2;
        }
        let n = (t.nrows() * t.ncols()) as f64;
        let r = y - t;
        let loss = r.norm_squared() / n + lambda * self.weight_norm2();
        let dy = r * (2.0 / n);
        let gw2 = &dy * a.transpose() + &self.w2 * (2.0 * lambda);
        let gb2 = row_sums(&dy);
        let mut dz = self.w2.transpose() * &dy;
        dz.zip_apply(&a, |g, s| *g *= s * (1.0 - s));
        let gw1 = &dz * x.transpose() + &self.w1 * (2.0 * lambda);
        let gb1 = row_sums(&dz);
        (
            loss,
            MlpGrad {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
            },
        )
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum())
}

/// ADAM moment estimates for every parameter block.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let sizes = [net.w1.len(), net.b1.len(), net.w2.len(), net.b2.len()];
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            v: sizes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn update(&mut self, net: &mut Mlp, g: &MlpGrad) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let params: [&mut [f64]; 4] = [
            net.w1.as_mut_slice(),
            net.b1.as_mut_slice(),
            net.w2.as_mut_slice(),
            net.b2.as_mut_slice(),
        ];
        let grads: [&[f64]; 4] = [
            g.w1.as_slice(),
            g.b1.as_slice(),
            g.w2.as_slice(),
            g.b2.as_slice(),
        ];
        for (k, (p, gr)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gr[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gr[i] * gr[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}
