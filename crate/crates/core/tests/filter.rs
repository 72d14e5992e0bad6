use jointdiff::diagnostics::joint_filter;
use jointdiff::filter::{ekf_forward, FilterInit, FilterOptions, PlatformTransition};
use jointdiff::simulate::{default_truth, simulate_panel};
use proptest::prelude::*;

fn inits(panel: &jointdiff::panel::ObservationPanel) -> (FilterInit, Vec<FilterInit>) {
    (
        FilterInit::diffuse(&panel.platform.observations).unwrap(),
        panel.complements.iter().map(|c| FilterInit::diffuse(&c.observations).unwrap()).collect(),
    )
}

#[test]
fn loglik_is_invariant_to_complement_order() {
    let mut cfg = default_truth();
    cfg.horizon = 300;
    cfg.seed = 8;
    let sim = simulate_panel(&cfg).unwrap();
    let (pi, ci) = inits(&sim.panel);
    let opts = FilterOptions::default();
    let base = joint_filter(&sim.panel, &sim.truth.platform, &sim.truth.complements, pi, &ci, &opts).unwrap();

    let mut panel = sim.panel.clone();
    panel.complements.reverse();
    let mut params = sim.truth.complements.clone();
    params.reverse();
    let mut ci_rev = ci.clone();
    ci_rev.reverse();
    let rev = joint_filter(&panel, &sim.truth.platform, &params, pi, &ci_rev, &opts).unwrap();
    assert!((base.loglik() - rev.loglik()).abs() < 1e-9);
    assert_eq!(base.platform, rev.platform);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filtering_never_adds_variance_and_loglik_sums(seed in 0u64..1000, v in 1e-4f64..1.0, w in 1e-4f64..1.0) {
        let mut cfg = default_truth();
        cfg.horizon = 150;
        cfg.launches.clear();
        cfg.complements.clear();
        cfg.dummies.clear();
        cfg.seed = seed;
        let sim = simulate_panel(&cfg).unwrap();
        let mut params = sim.truth.platform.clone();
        params.obs_var = v;
        params.state_var = w;
        let t = PlatformTransition::new(&params, &sim.panel.platform.frames).unwrap();
        let init = FilterInit::diffuse(&sim.panel.platform.observations).unwrap();
        let out = ekf_forward(&t, &sim.panel.platform.observations, init, &FilterOptions::default()).unwrap();
        for i in 0..out.len() {
            prop_assert!(out.filt_var[i] > 0.0);
            prop_assert!(out.filt_var[i] <= out.pred_var[i]);
        }
        let total: f64 = out.loglik_inc.iter().sum();
        prop_assert!((total - out.loglik).abs() <= 1e-9 * out.loglik.abs().max(1.0));
    }
}
