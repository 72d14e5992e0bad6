//! Run the extended Kalman filter over a simulated platform series at the
//! true parameters, then compare the smoother with backward-sampled paths.
//!
//! `cargo run --release --example filter_smooth`

use jointdiff::filter::{ekf_forward, ffbs_sample, rts_smoother, FilterInit, FilterOptions, PlatformTransition};
use jointdiff::simulate::{default_truth, simulate_panel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> jointdiff::Result<()> {
    let mut cfg = default_truth();
    cfg.horizon = 200;
    cfg.launches.clear();
    cfg.complements.clear();
    cfg.dummies.clear();
    let sim = simulate_panel(&cfg)?;
    let panel = &sim.panel;

    let model = PlatformTransition::new(&sim.truth.platform, &panel.platform.frames)?;
    let init = FilterInit::diffuse(&panel.platform.observations)?;
    let out = ekf_forward(&model, &panel.platform.observations, init, &FilterOptions::default())?;
    println!("log-likelihood {:.3}", out.loglik);

    let (mean, var) = rts_smoother(&out);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<Vec<f64>> =
        (0..500).map(|_| ffbs_sample(&out, true, &mut rng).map(|p| p.path)).collect::<jointdiff::Result<_>>()?;

    println!("{:>5} {:>9} {:>9} {:>9} {:>9}", "day", "truth", "filtered", "smoothed", "sampled");
    for t in (0..panel.horizon).step_by(25) {
        let sampled = draws.iter().map(|d| d[t]).sum::<f64>() / draws.len() as f64;
        println!(
            "{:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4}  (sd {:.4})",
            t + 1,
            sim.truth.platform_path[t],
            out.filt_mean[t],
            mean[t],
            sampled,
            var[t].sqrt()
        );
    }
    Ok(())
}
