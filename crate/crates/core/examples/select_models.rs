//! Evaluates all twenty candidate pairs on one dataset and selects the pair
//! with the smallest rank score.
//!
//! Usage: `cargo run --release --example select_models -- [n] [seed]`

use missing_exposure::estimators::Method;
use missing_exposure::seed;
use missing_exposure::selection::{evaluate_pool, select, CandidatePool, EvalConfig, SelectionStrategy};
use missing_exposure::simulation::{simulate_dataset, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let master = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let sim = simulate_dataset(&DgpConfig::binary_benchmark(n), &mut seed::rng(master))?;
    let pool = CandidatePool::standard();
    let cfg = EvalConfig {
        methods: vec![Method::Ipw, Method::Dr],
        ..EvalConfig::with_seed(master)
    };
    let ev = evaluate_pool(&sim.dataset, &pool, &cfg)?;

    println!("{:<14} {:>7} {:>7} {:>8} {:>9} {:>6} {:>6} {:>6} {:>5}", "pair", "IPW", "DR", "acc_w", "out_bic", "asmd", "ks", "abic", "rank");
    for ((i, j), r) in pool.pairs().zip(&ev.reports) {
        let est = |m| r.estimate_for(m).map_or(f64::NAN, |e| e.tau);
        println!(
            "{:<14} {:>7.3} {:>7.3} {:>8.4} {:>9.2} {:>6.3} {:>6.3} {:>6.3} {:>5.1}",
            pool.pair_label(i, j),
            est(Method::Ipw),
            est(Method::Dr),
            r.accuracy_w,
            r.out_bic,
            r.asmd,
            r.ks,
            r.abic,
            r.rank_score
        );
    }
    for strategy in [SelectionStrategy::RankScore, SelectionStrategy::Sequential] {
        let best = select(&ev.reports, strategy)?;
        println!("{strategy:?}: {}", ev.reports[best].label());
    }
    Ok(())
}
