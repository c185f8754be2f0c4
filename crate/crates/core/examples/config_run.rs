//! Drives the batch front end from a flat config: writes a dataset, then runs
//! `select` and `estimate` into a temporary directory and prints the files.
//!
//! Usage: `cargo run --release --example config_run`

use missing_exposure::cli::{parse_config, run_estimate, run_select};
use missing_exposure::data::write_csv;
use missing_exposure::seed;
use missing_exposure::simulation::{simulate_dataset, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("missing_exposure_config_run");
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("data.csv");
    let sim = simulate_dataset(&DgpConfig::binary_benchmark(600), &mut seed::rng(4))?;
    write_csv(&sim.dataset, std::fs::File::create(&csv)?, "NA")?;

    let text = format!(
        "data = {}\ncovariates = X1, X2, X3\nconfounders = X1\nexposure_related = X2\noutcome_related = X3\n\
         method = ipw\nm = 10\nB = 50\nseed = 12\nout = {}\n",
        csv.display(),
        dir.join("out").display()
    );
    let cfg = parse_config(&text)?;
    let (ev, best) = run_select(&cfg)?;
    println!("selected {}", ev.reports[best].label());
    let est = run_estimate(&cfg)?;
    println!("estimate {:.3}", est.estimate.tau);
    for f in ["candidates.csv", "selected.json", "diagnostics.json", "estimate.json"] {
        println!("wrote {}", dir.join("out").join(f).display());
    }
    Ok(())
}
