//! Simulate a panel at the default truth, fit it, and compare posterior
//! intervals with the true values.
//!
//! `cargo run --release --example fit_synthetic -- [iterations] [seed]`

use jointdiff::model::THETA_NAMES;
use jointdiff::sampler::{run_chain, McmcConfig, PriorConfig};
use jointdiff::simulate::{default_truth, simulate_panel};
use jointdiff::stats::PosteriorSummary;

fn main() -> jointdiff::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let mut cfg = default_truth();
    cfg.seed = seed;
    let sim = simulate_panel(&cfg)?;
    let mcmc = McmcConfig { iterations, seed, ..McmcConfig::default() };
    let start = std::time::Instant::now();
    let archive = run_chain(&sim.panel, &PriorConfig::default(), &mcmc, &Default::default())?;
    println!("{} draws in {:.1?}", archive.draws.len(), start.elapsed());

    let truth = &sim.truth;
    let mut rows: Vec<(String, f64)> = vec![
        ("M0".into(), truth.platform.m0),
        ("kappa".into(), truth.platform.kappa),
        ("p0".into(), truth.platform.p0),
        ("q".into(), truth.platform.q),
        ("V_p".into(), truth.platform.obs_var),
        ("W_p".into(), truth.platform.state_var),
    ];
    for (i, b) in truth.platform.beta.iter().enumerate() {
        rows.push((format!("beta{}", i + 1), *b));
    }
    for (i, r) in truth.platform.rho.iter().enumerate() {
        rows.push((format!("rho{}", i + 1), *r));
    }
    for (j, c) in truth.complements.iter().enumerate() {
        let id = &archive.header.complement_ids[j];
        for (k, name) in THETA_NAMES.iter().enumerate() {
            rows.push((format!("{id}.{name}"), c.theta()[k]));
        }
        rows.push((format!("{id}.V"), c.obs_var));
        rows.push((format!("{id}.W"), c.state_var));
    }
    let traces = archive.traces();
    let mut covered = 0;
    for (name, value) in &rows {
        let draws = &traces.iter().find(|(n, _)| n == name).expect("trace").1;
        let s = PosteriorSummary::from_draws(draws)?;
        let hit = s.covers(*value);
        covered += hit as usize;
        println!(
            "{name:>12} truth {value:>11.4e}  mean {:>11.4e}  [{:>11.4e}, {:>11.4e}] {}",
            s.estimate,
            s.q025,
            s.q975,
            if hit { "" } else { "MISS" }
        );
    }
    println!("coverage {covered}/{}", rows.len());
    println!("acceptance {:?}", archive.stats.acceptance);
    Ok(())
}
