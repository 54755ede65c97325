use super::*;
use crate::gp::{assemble_augmented_with, discretize, DiscreteSsm, Matern12};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    m: usize,
    ny: usize,
    nt: usize,
) -> (DiscreteSsm, MeasurementModel, GaussianBelief, DMatrix<f64>, DMatrix<f64>) {
    let freqs: Vec<f64> = (0..m).map(|i| rng.gen_range(1.0..6.0) * (i + 1) as f64).collect();
    let damp: Vec<f64> = freqs.iter().map(|w| 2.0 * rng.gen_range(0.02..0.2) * w).collect();
    let ks: Vec<Matern12> = (0..m)
        .map(|_| Matern12 {
            amplitude: rng.gen_range(0.5..3.0),
            length_scale: rng.gen_range(0.1..1.0),
        })
        .collect();
    let refs: Vec<&dyn LatentKernel> = ks.iter().map(|k| k as &dyn LatentKernel).collect();
    let ssm = discretize(
        &assemble_augmented_with(&freqs, &damp, &refs, rng.gen_range(1e-4..1e-2)).unwrap(),
        rng.gen_range(0.02..0.1),
    )
    .unwrap();
    let rows = DMatrix::from_fn(ny, m, |_, _| rng.gen_range(-1.0..1.0));
    let meas = MeasurementModel::displacement(&rows, ssm.state_dim(), rng.gen_range(0.05..0.3))
        .unwrap();
    let amps: Vec<f64> = ks.iter().map(|k| k.amplitude).collect();
    let mut prior = GaussianBelief::rest_prior(m, 0.01, &amps);
    for i in 0..prior.mean.len() {
        prior.mean[i] = 0.1 * gauss(rng);
    }
    let p = DMatrix::from_fn(m, nt, |_, _| gauss(rng));
    let y = DMatrix::from_fn(ny, nt, |_, _| gauss(rng));
    (ssm, meas, prior, y, p)
}

/// Dense joint Gaussian of the stacked states `z_0..z_{N-1}`.
fn joint_prior(
    ssm: &DiscreteSsm,
    prior: &GaussianBelief,
    p: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = ssm.state_dim();
    let nt = p.ncols();
    let mut mu = DVector::zeros(n * nt);
    let mut marg = vec![prior.cov.clone()];
    let mut m = prior.mean.clone();
    mu.rows_mut(0, n).copy_from(&m);
    for k in 1..nt {
        m = &ssm.a * &m + &ssm.b * p.column(k - 1);
        mu.rows_mut(k * n, n).copy_from(&m);
        let prev = &marg[k - 1];
        marg.push(&ssm.a * prev * ssm.a.transpose() + &ssm.q);
    }
    let mut sigma = DMatrix::zeros(n * nt, n * nt);
    for j in 0..nt {
        let mut block = marg[j].clone();
        for k in j..nt {
            if k > j {
                block = &ssm.a * block;
            }
            sigma.view_mut((k * n, j * n), (n, n)).copy_from(&block);
            sigma
                .view_mut((j * n, k * n), (n, n))
                .copy_from(&block.transpose());
        }
    }
    (mu, sigma)
}

struct Batch {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_likelihood: f64,
}

/// Conditions the joint prior on the first `upto` measurements.
fn condition(
    meas: &MeasurementModel,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n: usize,
    upto: usize,
) -> Batch {
    let ny = meas.outputs();
    let total = mu.len();
    let mut h = DMatrix::zeros(ny * upto, total);
    let mut r = DMatrix::zeros(ny * upto, ny * upto);
    let mut yy = DVector::zeros(ny * upto);
    for k in 0..upto {
        h.view_mut((k * ny, k * n), (ny, n)).copy_from(&meas.c);
        r.view_mut((k * ny, k * ny), (ny, ny)).copy_from(&meas.r);
        yy.rows_mut(k * ny, ny).copy_from(&y.column(k));
    }
    let s = &h * sigma * h.transpose() + r;
    let chol = s.clone().cholesky().unwrap();
    let resid = yy - &h * mu;
    let hs = &h * sigma;
    let mean = mu + hs.transpose() * chol.solve(&resid);
    let cov = sigma - hs.transpose() * chol.solve(&hs);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_likelihood = -0.5
        * ((ny * upto) as f64 * (2.0 * std::f64::consts::PI).ln()
            + log_det
            + resid.dot(&chol.solve(&resid)));
    Batch {
        mean,
        cov,
        log_likelihood,
    }
}

#[test]
fn scalar_hand_algebra() {
    // prior N(0, 1) one step back, A = Q = R = 1: predicted variance 2
    let ssm = DiscreteSsm {
        a: DMatrix::identity(1, 1),
        b: DMatrix::zeros(1, 1),
        q: DMatrix::identity(1, 1),
        dt: 1.0,
        modes: 0,
    };
    let meas = MeasurementModel {
        c: DMatrix::identity(1, 1),
        r: DMatrix::identity(1, 1),
    };
    let prior = GaussianBelief {
        mean: DVector::zeros(1),
        cov: DMatrix::from_element(1, 1, 2.0),
    };
    let y = DMatrix::from_element(1, 1, 2.0);
    let out = kalman_filter(&ssm, &meas, &y, &DMatrix::zeros(1, 1), &prior).unwrap();
    assert!((out.filtered_means[0][0] - 4.0 / 3.0).abs() < 1e-15);
    assert!((out.filtered_covs[0][(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn filter_and_smoother_match_batch_conditioning() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..6 {
        let m = 1 + trial % 2;
        let nt = if m == 1 { 20 } else { 11 };
        let (ssm, meas, prior, y, p) = random_instance(&mut rng, m, 2, nt);
        let n = ssm.state_dim();
        assert!(n * nt <= 200);
        let (mu, sigma) = joint_prior(&ssm, &prior, &p);
        let filt = kalman_filter(&ssm, &meas, &y, &p, &prior).unwrap();
        let smooth = rts_smoother(&ssm, &filt).unwrap();
        let full = condition(&meas, &mu, &sigma, &y, n, nt);
        assert!((filt.log_likelihood - full.log_likelihood).abs() <= 1e-8 * full.log_likelihood.abs());
        for k in 0..nt {
            let bm = full.mean.rows(k * n, n);
            let bc = full.cov.view((k * n, k * n), (n, n));
            let scale_m = bm.amax().max(1.0);
            let scale_c = bc.amax().max(1.0);
            assert!((smooth.means.column(k) - bm).amax() <= 1e-8 * scale_m);
            assert!((&smooth.covs[k] - bc).amax() <= 1e-6 * scale_c);
            let part = condition(&meas, &mu, &sigma, &y, n, k + 1);
            let fm = part.mean.rows(k * n, n);
            let fc = part.cov.view((k * n, k * n), (n, n));
            assert!((&filt.filtered_means[k] - fm).amax() <= 1e-8 * fm.amax().max(1.0));
            assert!((&filt.filtered_covs[k] - fc).amax() <= 1e-6 * fc.amax().max(1.0));
        }
    }
}

#[test]
fn noiseless_self_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (ssm, meas, mut prior, _, p) = random_instance(&mut rng, 2, 3, 200);
    let z0 = DVector::from_fn(ssm.state_dim(), |_, _| gauss(&mut rng));
    prior.mean = z0.clone();
    prior.cov *= 1e-12;
    let mut z = z0;
    let mut states = Vec::new();
    let mut y = DMatrix::zeros(3, 200);
    for k in 0..200 {
        if k > 0 {
            z = &ssm.a * &z + &ssm.b * p.column(k - 1);
        }
        y.set_column(k, &(&meas.c * &z));
        states.push(z.clone());
    }
    let out = kalman_filter(&ssm, &meas, &y, &p, &prior).unwrap();
    for (f, s) in out.filtered_means.iter().zip(&states) {
        assert!((f - s).amax() <= 1e-8 * s.amax().max(1.0));
    }
}

#[test]
fn smoother_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (ssm, meas, prior, y, p) = random_instance(&mut rng, 2, 2, 150);
    let filt = kalman_filter(&ssm, &meas, &y, &p, &prior).unwrap();
    let sm = rts_smoother(&ssm, &filt).unwrap();
    let last = y.ncols() - 1;
    assert_eq!(sm.means.column(last), filt.filtered_means[last].column(0));
    assert_eq!(sm.covs[last], filt.filtered_covs[last]);
    let sv = sm.variances();
    for k in 0..=last {
        for i in 0..ssm.state_dim() {
            assert!(sv[(i, k)] <= sm.filtered_variances[(i, k)] + 1e-10);
        }
        let c = &sm.covs[k];
        assert!((c - c.transpose()).amax() <= 1e-10 * c.amax());
        let min = c.clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-10 * c.trace());
    }
    assert_eq!(sm.q().nrows(), 2);
    assert_eq!(sm.eta().nrows(), 2);
}

#[test]
fn steady_state_likelihood_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (ssm, meas, prior, y, p) = random_instance(&mut rng, 2, 3, 2000);
    let full = kalman_filter(&ssm, &meas, &y, &p, &prior).unwrap().log_likelihood;
    let plain = log_likelihood(&ssm, &meas, &y, &p, &prior, 0.0).unwrap();
    assert!((full - plain).abs() <= 1e-10 * full.abs());
    let fast = log_likelihood(&ssm, &meas, &y, &p, &prior, 1e-12).unwrap();
    assert!((full - fast).abs() <= 1e-8 * full.abs(), "{full} vs {fast}");
}

#[test]
fn singular_innovation_reports_step() {
    let ssm = DiscreteSsm {
        a: DMatrix::identity(1, 1),
        b: DMatrix::zeros(1, 1),
        q: DMatrix::zeros(1, 1),
        dt: 1.0,
        modes: 0,
    };
    let meas = MeasurementModel {
        c: DMatrix::zeros(1, 1),
        r: DMatrix::zeros(1, 1),
    };
    let prior = GaussianBelief {
        mean: DVector::zeros(1),
        cov: DMatrix::zeros(1, 1),
    };
    let err = kalman_filter(&ssm, &meas, &DMatrix::zeros(1, 3), &DMatrix::zeros(1, 3), &prior)
        .unwrap_err();
    assert!(err.to_string().contains("step 0"));
}

fn synthetic_problem(theta: &GpHyperparams, seed: u64, nt: usize) -> InferenceProblem {
    let freqs = vec![6.0];
    let damp = vec![2.0 * 0.05 * 6.0];
    let dt = 0.02;
    let k = theta.kernels();
    let ssm = discretize(
        &assemble_augmented_with(&freqs, &damp, &[&k[0] as &dyn LatentKernel], 0.0).unwrap(),
        dt,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = DMatrix::from_fn(1, nt, |_, k| 5.0 * (1.3 * k as f64 * dt).sin());
    let eig = ssm.q.clone().symmetric_eigen();
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let mut z = DVector::zeros(3);
    z[2] = theta.amplitude[0] * gauss(&mut rng);
    let mut y = DMatrix::zeros(1, nt);
    for i in 0..nt {
        if i > 0 {
            z = &ssm.a * &z + &ssm.b * p.column(i - 1);
            z += &root * DVector::from_fn(3, |_, _| gauss(&mut rng));
        }
        y[(0, i)] = z[0];
    }
    InferenceProblem {
        frequencies: freqs,
        damping: damp,
        sensor_rows: DMatrix::identity(1, 1),
        y,
        p,
        dt,
        sigma_r: 1e-6,
        jitter: 1e-12,
        sigma_q2: 1e-6,
    }
}

fn wide_priors() -> PriorSpec {
    PriorSpec {
        amplitude: StudentT {
            mu: 1.0,
            v: 1e8,
            nu: 1.0,
        },
        length_scale: StudentT {
            mu: 0.1,
            v: 1e8,
            nu: 1.0,
        },
    }
}

#[test]
fn map_recovers_known_hyperparameters() {
    let truth = GpHyperparams::uniform(1, 2.0, 0.3);
    let problem = synthetic_problem(&truth, 31, 4000);
    let cfg = MapConfig {
        starts: 3,
        seed: 5,
        initial: Some(GpHyperparams::uniform(1, 1.0, 0.1)),
        ..MapConfig::default()
    };
    let priors = wide_priors();
    let res = map_optimize(&problem, &priors, &cfg).unwrap();
    let a = res.theta.amplitude[0];
    let l = res.theta.length_scale[0];
    assert!((a / 2.0 - 1.0).abs() < 0.2, "alpha {a}");
    assert!((l / 0.3 - 1.0).abs() < 0.2, "l {l}");
    for t in &res.traces {
        assert!(res.log_posterior >= t.start_log_posterior);
        assert!(t.log_posterior >= t.start_log_posterior);
    }
    let again = map_optimize(&problem, &priors, &cfg).unwrap();
    assert_eq!(res, again);
}

#[test]
fn posterior_decomposes_and_stays_finite() {
    let problem = synthetic_problem(&GpHyperparams::uniform(1, 1.0, 0.2), 3, 300);
    let priors = PriorSpec::default();
    let th = GpHyperparams::uniform(1, 3.0, 0.5);
    let ll = problem.log_likelihood(&th, 0.0).unwrap();
    let lp = log_posterior(&problem, &th, &priors, 0.0);
    assert!((lp - ll - priors.ln_prior(&th)).abs() < 1e-9 * lp.abs());
    let extreme = GpHyperparams::uniform(1, 1e8, 1e-6);
    assert!(log_posterior(&problem, &extreme, &priors, 0.0).is_finite());
    // two independent identical records: log-likelihoods add, priors do not
    let both = 2.0 * ll + priors.ln_prior(&th);
    assert!((both - lp - ll).abs() < 1e-9 * both.abs());
}

#[test]
fn rejects_bad_configuration() {
    let problem = synthetic_problem(&GpHyperparams::uniform(1, 1.0, 0.2), 3, 50);
    let cfg = MapConfig {
        starts: 0,
        ..MapConfig::default()
    };
    assert!(map_optimize(&problem, &PriorSpec::default(), &cfg).is_err());
    let cfg = MapConfig {
        initial: Some(GpHyperparams::uniform(2, 1.0, 1.0)),
        ..MapConfig::default()
    };
    assert!(map_optimize(&problem, &PriorSpec::default(), &cfg).is_err());
}

#[test]
fn projected_likelihood_equals_full_filter() {
    // two modes seen by five sensors
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let theta = GpHyperparams::uniform(2, 2.0, 0.3);
    let nt = 400;
    let problem = InferenceProblem {
        frequencies: vec![5.0, 13.0],
        damping: vec![0.2, 0.5],
        sensor_rows: DMatrix::from_fn(5, 2, |_, _| gauss(&mut rng)),
        y: DMatrix::from_fn(5, nt, |_, _| gauss(&mut rng)),
        p: DMatrix::from_fn(2, nt, |i, k| ((i + 1) as f64 * 0.05 * k as f64).sin()),
        dt: 0.01,
        sigma_r: 0.3,
        jitter: 1e-12,
        sigma_q2: 1e-6,
    };
    let (ssm, meas, prior) = problem.system(&theta).unwrap();
    let full = kalman_filter(&ssm, &meas, &problem.y, &problem.p, &prior)
        .unwrap()
        .log_likelihood;
    let fast = problem.log_likelihood(&theta, 0.0).unwrap();
    assert!((full - fast).abs() <= 1e-9 * full.abs(), "{full} vs {fast}");
}
