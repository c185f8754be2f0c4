//! Weighted imputation accuracy of each candidate imputation model, next to
//! the accuracy against the masked true exposures that only a simulation can
//! compute.
//!
//! Usage: `cargo run --release --example weighted_accuracy`

use missing_exposure::criteria::{fit_missingness, weighted_accuracy, SplitPlan, DEFAULT_SPLITS};
use missing_exposure::seed;
use missing_exposure::selection::CandidatePool;
use missing_exposure::simulation::{benchmark_accuracy, simulate_dataset, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = simulate_dataset(&DgpConfig::binary_benchmark(3000), &mut seed::rng(8))?;
    let data = &sim.dataset;
    let plan = SplitPlan::for_data(data, DEFAULT_SPLITS)?;
    let miss = fit_missingness(data)?;
    println!("q = {:.3}, {} splits, max w_hat {:.3}", plan.q, plan.repeats, miss.max_w_hat());
    println!("{:<6} {:<26} {:>10} {:>10}", "model", "formula", "weighted", "benchmark");
    for named in &CandidatePool::standard().imputation_specs {
        let acc = weighted_accuracy(data, &named.spec, &plan, &miss, 40)?;
        let bench = benchmark_accuracy(&sim, &named.spec, 41)?;
        println!("{:<6} {:<26} {acc:>10.4} {bench:>10.4}", named.label, named.spec.to_string());
    }
    Ok(())
}
