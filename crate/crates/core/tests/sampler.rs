use jointdiff::sampler::{run_chain, McmcConfig, PriorConfig};
use jointdiff::simulate::{default_truth, simulate_panel};
use jointdiff::stats::{InverseGamma, Normal, RegressionStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 20_000;

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// `|sample - target|` in units of the Monte Carlo standard error of the
/// mean and of the variance (normal-theory fourth moment).
fn z_scores(xs: &[f64], mean: f64, var: f64) -> (f64, f64) {
    let (m, v) = moments(xs);
    let n = xs.len() as f64;
    ((m - mean).abs() / (var / n).sqrt(), (v - var).abs() / (var * (2.0 / (n - 1.0)).sqrt()))
}

#[test]
fn regression_update_leaves_closed_form_conditional_invariant() {
    // two regressors, known noise: posterior precision P = X'X/s2 + D^-1
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s2: f64 = 0.5;
    let prior = [Normal::new(0.3, 4.0), Normal::new(-1.0, 9.0)];
    let mut stats = RegressionStats::new(2);
    let (mut sxx, mut sxr) = ([[0.0; 2]; 2], [0.0; 2]);
    for i in 0..40 {
        let x = [1.0, (i as f64 * 0.37).sin()];
        let r = 0.8 * x[0] - 1.5 * x[1] + jointdiff::stats::std_normal(&mut rng) * s2.sqrt();
        stats.push(&x, r);
        for a in 0..2 {
            sxr[a] += x[a] * r;
            for b in 0..2 {
                sxx[a][b] += x[a] * x[b];
            }
        }
    }
    let p =
        [[sxx[0][0] / s2 + 1.0 / prior[0].var, sxx[0][1] / s2], [sxx[1][0] / s2, sxx[1][1] / s2 + 1.0 / prior[1].var]];
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    let cov = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
    let rhs = [sxr[0] / s2 + prior[0].mean / prior[0].var, sxr[1] / s2 + prior[1].mean / prior[1].var];
    let mean = [cov[0][0] * rhs[0] + cov[0][1] * rhs[1], cov[1][0] * rhs[0] + cov[1][1] * rhs[1]];

    let post = stats.posterior(&prior, s2).unwrap();
    let draws: Vec<_> = (0..DRAWS).map(|_| post.sample(&mut rng)).collect();
    for k in 0..2 {
        let xs: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let (zm, zv) = z_scores(&xs, mean[k], cov[k][k]);
        assert!(zm < 3.0 && zv < 3.0, "coefficient {k}: mean z {zm:.2}, variance z {zv:.2}");
    }
}

#[test]
fn variance_update_leaves_closed_form_conditional_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prior = InverseGamma::new(3.0, 0.5);
    let (n, ss) = (30, 12.0);
    let (a, b) = (prior.shape + n as f64 / 2.0, prior.scale + ss / 2.0);
    let mean = b / (a - 1.0);
    let var = b * b / ((a - 1.0).powi(2) * (a - 2.0));
    let xs: Vec<f64> = (0..DRAWS).map(|_| prior.posterior_draw(n, ss, &mut rng)).collect();
    let (m, _) = moments(&xs);
    // the inverse gamma has heavy tails, so only the mean gets the normal-theory bound
    assert!((m - mean).abs() / (var / DRAWS as f64).sqrt() < 3.0);
    let (_, v) = moments(&xs);
    assert!((v / var - 1.0).abs() < 0.1);
}

#[test]
fn kept_draws_satisfy_type_invariants() {
    let mut cfg = default_truth();
    cfg.horizon = 150;
    cfg.launches.truncate(3);
    cfg.complements.truncate(3);
    cfg.dummies.truncate(3);
    cfg.seed = 5;
    let sim = simulate_panel(&cfg).unwrap();
    let mcmc = McmcConfig { iterations: 400, thin: 2, seed: 5, ..McmcConfig::default() };
    let archive = run_chain(&sim.panel, &PriorConfig::default(), &mcmc, &Default::default()).unwrap();
    assert_eq!(archive.draws.len(), (400 - 100) / 2);
    assert!(archive.draws.windows(2).all(|w| w[1].iteration > w[0].iteration));
    for d in &archive.draws {
        let p = &d.platform;
        assert!(p.obs_var > 0.0 && p.state_var > 0.0);
        for f in &sim.panel.platform.frames {
            assert!(p.m0 + p.kappa * f.addons > 0.0);
        }
        for c in &d.complements {
            assert!(c.alpha > 0.0 && c.alpha < 1.0);
            assert!(c.delta > 0.0 && c.delta < 1.0);
            assert!(c.obs_var > 0.0 && c.state_var > 0.0);
        }
        assert!(d.loglik.is_finite());
    }
}

#[test]
fn chains_are_seed_deterministic() {
    let mut cfg = default_truth();
    cfg.horizon = 80;
    cfg.launches.truncate(2);
    cfg.complements.truncate(2);
    cfg.dummies.truncate(2);
    let sim = simulate_panel(&cfg).unwrap();
    let mcmc = McmcConfig { iterations: 120, seed: 9, ..McmcConfig::default() };
    let a = run_chain(&sim.panel, &PriorConfig::default(), &mcmc, &Default::default()).unwrap();
    let b = run_chain(&sim.panel, &PriorConfig::default(), &mcmc, &Default::default()).unwrap();
    assert_eq!(serde_json::to_string(&a.draws).unwrap(), serde_json::to_string(&b.draws).unwrap());
}
