//! One-step-ahead forecasts from a fitted chain against the random-walk
//! baseline.
//!
//! `cargo run --release --example forecast -- [iterations] [seed]`

use jointdiff::diagnostics::{forecast_from_archive, random_walk_errors};
use jointdiff::sampler::{run_chain, McmcConfig, PriorConfig};
use jointdiff::simulate::{default_truth, simulate_panel};

fn main() -> jointdiff::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(1500);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let mut cfg = default_truth();
    cfg.seed = seed;
    let sim = simulate_panel(&cfg)?;
    let mcmc = McmcConfig { iterations, seed, ..McmcConfig::default() };
    let archive = run_chain(&sim.panel, &PriorConfig::default(), &mcmc, &Default::default())?;

    println!("{:<10} {:>11} {:>11} {:>11} {:>11}", "series", "MAD", "MSE", "RW MAD", "RW MSE");
    for s in forecast_from_archive(&archive, &sim.panel)? {
        let (rw_mad, rw_mse) = random_walk_errors(&s.observed);
        println!("{:<10} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}", s.label, s.mad, s.mse, rw_mad, rw_mse);
    }
    Ok(())
}
