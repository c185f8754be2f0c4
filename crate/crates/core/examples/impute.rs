//! Multiple imputation of the missing exposure from a logistic model fitted on
//! the observed rows, with coefficients redrawn for every completion.
//!
//! Usage: `cargo run --release --example impute -- [m]`

use missing_exposure::formula::parse_formula;
use missing_exposure::imputation::impute;
use missing_exposure::seed;
use missing_exposure::simulation::{simulate_dataset, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let sim = simulate_dataset(&DgpConfig::binary_benchmark(1000), &mut seed::rng(21))?;
    let data = &sim.dataset;
    let spec = parse_formula("A ~ X1 + X2 + X3 + Y")?;
    let imps = impute(data, &spec, m, 99)?;

    if let Some(fit) = &imps.fit {
        println!("imputation model {spec}: coefficients {:.3?}", fit.coefficients.as_slice());
    }
    let missing: Vec<usize> = (0..data.n()).filter(|&i| data.missing_indicator()[i] == 1).collect();
    let truly_exposed = missing.iter().filter(|&&i| sim.true_a[i] == 1).count();
    println!("{} missing rows, {} truly exposed", missing.len(), truly_exposed);
    for c in &imps.completions {
        let imputed = missing.iter().filter(|&&i| c.exposure_imputed[i] == 1).count();
        let agree = missing.iter().filter(|&&i| c.exposure_imputed[i] == sim.true_a[i]).count();
        println!(
            "completion {:>2}: {imputed} imputed exposed, agreement with truth {:.3}",
            c.imputation_index,
            agree as f64 / missing.len() as f64
        );
    }
    Ok(())
}
