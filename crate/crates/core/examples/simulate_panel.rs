//! Simulate a platform with complements at the default truth and print the
//! latent and observed adoption paths at a few checkpoints.
//!
//! `cargo run --release --example simulate_panel -- [seed]`

use jointdiff::simulate::{default_truth, simulate_panel};

fn main() -> jointdiff::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = default_truth();
    cfg.seed = seed;
    let sim = simulate_panel(&cfg)?;
    let panel = &sim.panel;
    println!("{} days, {} complements", panel.horizon, panel.complements.len());

    println!("{:>5} {:>10} {:>10}", "day", "latent", "observed");
    for day in (1..=panel.horizon).step_by(50) {
        let obs = panel.platform.observations[day - 1].map_or("NA".into(), |y| format!("{y:.3}"));
        println!("{day:>5} {:>10.3} {obs:>10}", sim.truth.platform_path[day - 1]);
    }

    for (c, path) in panel.complements.iter().zip(&sim.truth.complement_paths) {
        let last = path.last().copied().unwrap_or(0.0);
        println!("{:<6} launch {:>4}  final {:>8.4}  releases {}", c.id, c.launch, last, c.releases.len());
    }
    Ok(())
}
