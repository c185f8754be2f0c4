//! Logistic and linear fits by IRLS with standard errors and BIC.
//!
//! Usage: `cargo run --release --example fit_glm`

use missing_exposure::glm::{bic, expit, fit_glm, Family};
use missing_exposure::seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 2000;
    let truth = [-0.5, 1.2, -0.8];
    let mut rng = seed::rng(11);
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
    let y_bin = DVector::from_fn(n, |i, _| {
        let eta: f64 = (0..3).map(|j| x[(i, j)] * truth[j]).sum();
        f64::from(rng.random::<f64>() < expit(eta))
    });
    let y_lin = DVector::from_fn(n, |i, _| {
        (0..3).map(|j| x[(i, j)] * truth[j]).sum::<f64>() + rng.random::<f64>() - 0.5
    });

    for (name, y, family) in [("logistic", &y_bin, Family::Logistic), ("linear", &y_lin, Family::Linear)] {
        let fit = fit_glm(&x, y, family)?;
        println!("{name}: {} iterations, log-likelihood {:.3}, BIC {:.3}", fit.iterations, fit.log_likelihood, bic(&fit)?);
        for (j, t) in truth.iter().enumerate() {
            println!(
                "  beta[{j}] = {:>7.4} (se {:.4}), truth {t}",
                fit.coefficients[j],
                fit.covariance[(j, j)].sqrt()
            );
        }
    }
    Ok(())
}
