use jointdiff::endogeneity::{liv_fit, LivConfig, LivModel, LivSimulation};

fn config(seed: u64) -> LivConfig {
    LivConfig { iterations: 1500, seed, ..Default::default() }
}

#[test]
fn zero_correlation_intervals_cover_zero() {
    let covered = (0..20u64)
        .filter(|&s| {
            let data = LivSimulation { seed: 100 + s, ..Default::default() }.generate().unwrap();
            let r = liv_fit(&data, &config(s)).unwrap();
            let c = r.proxies[0].corr.unwrap();
            c.q025 <= 0.0 && 0.0 <= c.q975
        })
        .count();
    assert!(covered >= 18, "covered {covered}/20");
}

#[test]
fn injected_correlation_is_recovered() {
    let data = LivSimulation { corr: 0.5, seed: 7, ..Default::default() }.generate().unwrap();
    let r = liv_fit(&data, &config(7)).unwrap();
    let c = r.proxies[0].corr.unwrap();
    assert!((c.estimate - 0.5).abs() <= 0.15, "corr {:?}", c);
}

#[test]
fn independent_noise_leaves_covariance_near_zero() {
    let data = LivSimulation { seed: 3, ..Default::default() }.generate().unwrap();
    let r = liv_fit(&data, &config(3)).unwrap();
    let s = r.proxies[0].cov.unwrap();
    assert!(s.estimate.abs() <= 3.0 * s.sd, "{s:?}");
}

#[test]
fn fits_are_seed_deterministic() {
    let data = LivSimulation { horizon: 200, seed: 1, ..Default::default() }.generate().unwrap();
    let cfg = LivConfig { iterations: 100, ..config(5) };
    assert_eq!(liv_fit(&data, &cfg).unwrap(), liv_fit(&data, &cfg).unwrap());
}

#[test]
fn correlation_matches_covariance_draws() {
    let data = LivSimulation { horizon: 300, corr: 0.4, seed: 2, ..Default::default() }.generate().unwrap();
    let r = liv_fit(&data, &LivConfig { iterations: 300, ..config(2) }).unwrap();
    let (c, s) = (r.proxies[0].corr.unwrap(), r.proxies[0].cov.unwrap());
    assert_eq!(c.estimate.signum(), s.estimate.signum());
    assert!(c.q025 >= -1.0 && c.q975 <= 1.0);
}

#[test]
fn instrumented_model_with_null_instrument_matches_plain_model() {
    let mut data = LivSimulation { corr: 0.5, seed: 11, ..Default::default() }.generate().unwrap();
    let plain = liv_fit(&data, &config(11)).unwrap().proxies[0].corr.unwrap();
    data.instrument = Some((0..data.observations.len()).map(|t| ((t * 7919) % 13) as f64 / 13.0 - 0.5).collect());
    let cfg = LivConfig { model: LivModel::Instrumented, ..config(11) };
    let inst = liv_fit(&data, &cfg).unwrap().proxies[0].corr.unwrap();
    assert!((plain.estimate - inst.estimate).abs() <= 0.1, "{plain:?} vs {inst:?}");
}

#[test]
fn independent_releases_cover_zero() {
    let covered = (0..20u64)
        .filter(|&s| {
            let data = LivSimulation { b: vec![0.002, 0.002], seed: 500 + s, ..Default::default() }.generate().unwrap();
            let r = liv_fit(&data, &LivConfig { iterations: 1500, seed: s, ..Default::default() }).unwrap();
            r.proxies.iter().all(|p| {
                let c = p.corr.unwrap();
                c.q025 <= 0.0 && 0.0 <= c.q975
            })
        })
        .count();
    assert!(covered >= 18, "covered {covered}/20");
}

#[test]
fn release_table_has_one_row_per_complement() {
    use jointdiff::endogeneity::{liv_fit_releases, write_release_table};
    use jointdiff::simulate::{default_truth, simulate_panel};
    let mut cfg = default_truth();
    cfg.horizon = 150;
    cfg.launches.truncate(3);
    cfg.complements.truncate(3);
    cfg.dummies.truncate(3);
    let sim = simulate_panel(&cfg).unwrap();
    let mut panel = sim.panel.clone();
    for f in panel.complements[0].frames.iter_mut() {
        f.pv = 0.0;
        f.av = 0.0;
    }
    let liv = LivConfig { iterations: 60, ..Default::default() };
    let rows = liv_fit_releases(&panel, &sim.truth.complements, &sim.truth.platform_path, &liv).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].1.proxies.iter().all(|p| p.uninformative));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("release.csv");
    write_release_table(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.split(',').count() == 9));
}
