//! Fit a synthetic panel, then search for the monthly editorial-effort
//! schedule with the same total that maximizes the cumulative one-step-ahead
//! platform forecast.
//!
//! `cargo run --release --example reallocate_effort -- [seed] [generations]`

use jointdiff::allocator::{compare_schedules, optimize, AllocationProblem, GaConfig, Granularity};
use jointdiff::sampler::{run_chain, McmcConfig, PriorConfig};
use jointdiff::simulate::{default_truth, simulate_panel};

fn main() -> jointdiff::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let generations = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let mut cfg = default_truth();
    cfg.seed = seed;
    let sim = simulate_panel(&cfg)?;
    let mcmc = McmcConfig { iterations: 2000, seed, ..McmcConfig::default() };
    let archive = run_chain(&sim.panel, &PriorConfig::default(), &mcmc, &Default::default())?;
    let (params, _) = archive.posterior_mean()?;
    println!("fitted rho = {:?}", params.rho);

    let transform = sim.transforms.get("platform.effort").cloned().expect("effort transform");
    let problem =
        AllocationProblem::new(&sim.panel, &params, archive.header.platform_init, transform, Granularity::monthly())?;
    let observed = problem.observed();
    let ga = GaConfig { generations, seed, ..GaConfig::default() };
    let result = optimize(&problem, observed.budget, &ga)?;

    let cmp = compare_schedules(&observed.effort, &result.best.effort, Some(&problem))?;
    println!("period   observed  optimized");
    for r in &cmp.rows {
        println!("{:>6} {:>10.1} {:>10.1}", r.period, r.a, r.b);
    }
    println!(
        "objective observed {:.4} optimized {:.4} (gap {:.4})",
        cmp.objective_a.unwrap(),
        cmp.objective_b.unwrap(),
        cmp.gap.unwrap()
    );
    println!("sd observed {:.2} optimized {:.2}", cmp.sd_a, cmp.sd_b);
    Ok(())
}
