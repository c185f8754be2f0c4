#![allow(dead_code)]

use std::path::Path;

use missing_exposure::data::write_csv;
use missing_exposure::glm::{fit_glm, logistic_score, Family};
use missing_exposure::seed;
use missing_exposure::simulation::{simulate_dataset, DgpConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Bernoulli-logit log-likelihood written out row by row, independent of the library.
pub fn loglik(x: &DMatrix<f64>, y: &DVector<f64>, b: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * b[j]).sum();
            let log1pexp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            y[i] * eta - log1pexp
        })
        .sum()
}

fn fd_gradient(x: &DMatrix<f64>, y: &DVector<f64>, b: &[f64], h: f64) -> Vec<f64> {
    (0..b.len())
        .map(|j| {
            let mut up = b.to_vec();
            let mut dn = b.to_vec();
            up[j] += h;
            dn[j] -= h;
            (loglik(x, y, &up) - loglik(x, y, &dn)) / (2.0 * h)
        })
        .collect()
}

/// Damped Newton ascent with finite-difference gradient and Hessian.
pub fn oracle_mle(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<Vec<f64>> {
    let k = x.ncols();
    let mut b = vec![0.0; k];
    let mut ll = loglik(x, y, &b);
    for _ in 0..200 {
        let g = fd_gradient(x, y, &b, 1e-5);
        if g.iter().all(|v| v.abs() < 1e-9 * x.nrows() as f64) {
            return Some(b);
        }
        let h = 1e-4;
        let mut hess = DMatrix::zeros(k, k);
        for j in 0..k {
            let mut up = b.clone();
            let mut dn = b.clone();
            up[j] += h;
            dn[j] -= h;
            let (gu, gd) = (fd_gradient(x, y, &up, 1e-5), fd_gradient(x, y, &dn, 1e-5));
            for i in 0..k {
                hess[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let step = (-hess).lu().solve(&DVector::from_vec(g))?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = b.iter().zip(step.iter()).map(|(bi, s)| bi + t * s).collect();
            let lt = loglik(x, y, &trial);
            if lt >= ll {
                b = trial;
                ll = lt;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Some(b);
            }
        }
    }
    None
}

pub fn random_instance<R: Rng>(rng: &mut R) -> (DMatrix<f64>, DVector<f64>) {
    let n = rng.random_range(40..=90);
    let k = rng.random_range(2..=4);
    let truth: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let y = DVector::from_fn(n, |i, _| {
        let eta: f64 = (0..k).map(|j| x[(i, j)] * truth[j]).sum();
        f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())))
    });
    (x, y)
}

#[derive(Debug, Default)]
pub struct GlmOracleReport {
    pub instances: usize,
    pub max_coef_diff: f64,
    pub max_grad_rel_err: f64,
    /// Instances where some point of the local grid beat the fitted optimum.
    pub grid_violations: usize,
}

/// Compares IRLS with the oracle on `count` random non-separated instances.
pub fn glm_oracle_check(count: usize, master: u64) -> GlmOracleReport {
    let mut rng = seed::rng(master);
    let mut rep = GlmOracleReport::default();
    while rep.instances < count {
        let (x, y) = random_instance(&mut rng);
        let Ok(fit) = fit_glm(&x, &y, Family::Logistic) else { continue };
        let Some(oracle) = oracle_mle(&x, &y) else { continue };
        rep.instances += 1;
        let b = fit.coefficients.as_slice();
        for (a, o) in b.iter().zip(&oracle) {
            rep.max_coef_diff = rep.max_coef_diff.max((a - o).abs());
        }

        let best = loglik(&x, &y, b);
        let k = b.len();
        let mut beaten = false;
        for code in 0..3usize.pow(k as u32) {
            let mut c = code;
            let p: Vec<f64> = b
                .iter()
                .map(|bi| {
                    let off = (c % 3) as f64 - 1.0;
                    c /= 3;
                    bi + 1e-3 * off
                })
                .collect();
            if loglik(&x, &y, &p) > best + 1e-12 {
                beaten = true;
            }
        }
        rep.grid_violations += usize::from(beaten);

        let probe: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
        let analytic = logistic_score(&x, &y, &DVector::from_vec(probe.clone())).expect("shapes match");
        let fd = fd_gradient(&x, &y, &probe, 1e-5);
        for (a, f) in analytic.iter().zip(&fd) {
            rep.max_grad_rel_err = rep.max_grad_rel_err.max((a - f).abs() / f.abs().max(1.0));
        }
    }
    rep
}

/// Writes a simulated binary-outcome dataset with missing exposures.
pub fn write_simulated_csv(path: &Path, n: usize, seed_: u64) {
    let sim = simulate_dataset(&DgpConfig::binary_benchmark(n), &mut seed::rng(seed_)).unwrap();
    write_csv(&sim.dataset, std::fs::File::create(path).unwrap(), "NA").unwrap();
}
