//! Round trip of a dataset with missing exposures through CSV, with schema
//! checks on load.
//!
//! Usage: `cargo run --release --example load_csv -- [path.csv]`

use missing_exposure::data::{load_csv, write_csv, CsvSchema, OutcomeKind};
use missing_exposure::seed;
use missing_exposure::simulation::{simulate_dataset, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("missing_exposure_example.csv"));
    let sim = simulate_dataset(&DgpConfig::binary_benchmark(300), &mut seed::rng(3))?;
    write_csv(&sim.dataset, std::fs::File::create(&path)?, "NA")?;

    let schema = CsvSchema::new("A", "Y", &["X1", "X2", "X3"], OutcomeKind::Binary).with_missing_token("NA");
    let data = load_csv(&path, &schema)?;
    println!(
        "{}: n = {}, missing exposures {} ({:.1}%)",
        path.display(),
        data.n(),
        data.missing_count(),
        100.0 * data.missing_rate()
    );

    let bad = CsvSchema::new("A", "Y", &["X1", "age"], OutcomeKind::Binary);
    match load_csv(&path, &bad) {
        Err(e) => println!("schema with an unknown column is rejected: {e}"),
        Ok(_) => println!("unexpected: unknown column accepted"),
    }
    Ok(())
}
