//! Model comparison, one-step-ahead forecasts and convergence summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::archive::DrawArchive;
use crate::error::{Error, Result};
use crate::filter::{ekf_forward, ComplementTransition, FilterInit, FilterOptions, FilterOutput, PlatformTransition};
use crate::model::{ComplementParams, ModelConfig, PlatformParams};
use crate::panel::ObservationPanel;
use crate::stats::{mean, sample_var};

/// Platform filter pass plus one complement pass per series, each conditional
/// on the platform filtered means.
pub struct JointFilter {
    pub platform: FilterOutput,
    pub complements: Vec<FilterOutput>,
}

impl JointFilter {
    pub fn loglik(&self) -> f64 {
        self.platform.loglik + self.complements.iter().map(|c| c.loglik).sum::<f64>()
    }
}

pub fn joint_filter(
    panel: &ObservationPanel,
    platform: &PlatformParams,
    complements: &[ComplementParams],
    platform_init: FilterInit,
    complement_inits: &[FilterInit],
    options: &FilterOptions,
) -> Result<JointFilter> {
    if complements.len() != panel.complements.len() || complement_inits.len() != panel.complements.len() {
        return Err(Error::DimensionMismatch {
            what: "complement parameters",
            expected: panel.complements.len(),
            got: complements.len().min(complement_inits.len()),
        });
    }
    let t = PlatformTransition::new(platform, &panel.platform.frames)?;
    let p = ekf_forward(&t, &panel.platform.observations, platform_init, options)?;
    let mut cs = Vec::with_capacity(complements.len());
    for ((c, params), init) in panel.complements.iter().zip(complements).zip(complement_inits) {
        let t = ComplementTransition::new(params, &c.frames, c.launch, &p.filt_mean)?;
        cs.push(ekf_forward(&t, &c.observations, *init, options)?);
    }
    Ok(JointFilter { platform: p, complements: cs })
}

/// Filter-marginalized joint log-likelihood.
pub fn joint_loglik(
    panel: &ObservationPanel,
    platform: &PlatformParams,
    complements: &[ComplementParams],
    platform_init: FilterInit,
    complement_inits: &[FilterInit],
    options: &FilterOptions,
) -> Result<f64> {
    Ok(joint_filter(panel, platform, complements, platform_init, complement_inits, options)?.loglik())
}

// ---------------------------------------------------------------------------
// DIC

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicSummary {
    pub dic: f64,
    pub p_d: f64,
    /// Log-likelihood at the posterior mean.
    pub ll_at_mean: f64,
    pub mean_deviance: f64,
}

/// `p_D = mean(D) - D(theta_bar)`, `DIC = D(theta_bar) + 2 p_D`.
pub fn dic_from_deviances(deviances: &[f64], deviance_at_mean: f64) -> Result<DicSummary> {
    if deviances.is_empty() {
        return Err(Error::InsufficientDraws("no deviances".into()));
    }
    if !deviance_at_mean.is_finite() || deviances.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFiniteDeviance);
    }
    let mean_deviance = mean(deviances);
    let p_d = mean_deviance - deviance_at_mean;
    Ok(DicSummary { dic: deviance_at_mean + 2.0 * p_d, p_d, ll_at_mean: -0.5 * deviance_at_mean, mean_deviance })
}

/// DIC of an archive against the panel it was fitted to. Draws whose stored
/// log-likelihood is missing are re-evaluated.
pub fn dic(archive: &DrawArchive, panel: &ObservationPanel) -> Result<DicSummary> {
    if archive.draws.is_empty() {
        return Err(Error::InsufficientDraws("empty archive".into()));
    }
    check_archive_matches(archive, panel)?;
    let opts = FilterOptions::default();
    let h = &archive.header;
    let mut deviances = Vec::with_capacity(archive.draws.len());
    for d in &archive.draws {
        let ll = if d.loglik.is_finite() {
            d.loglik
        } else {
            joint_loglik(panel, &d.platform, &d.complements, h.platform_init, &h.complement_inits, &opts)
                .map_err(|_| Error::NonFiniteDeviance)?
        };
        deviances.push(-2.0 * ll);
    }
    let (p, cs) = archive.posterior_mean()?;
    let ll = joint_loglik(panel, &p, &cs, h.platform_init, &h.complement_inits, &opts)
        .map_err(|_| Error::NonFiniteDeviance)?;
    dic_from_deviances(&deviances, -2.0 * ll)
}

fn check_archive_matches(archive: &DrawArchive, panel: &ObservationPanel) -> Result<()> {
    let ids: Vec<&str> = panel.complements.iter().map(|c| c.id.as_str()).collect();
    let archived: Vec<&str> = archive.header.complement_ids.iter().map(String::as_str).collect();
    if ids != archived {
        return Err(Error::InvalidParameter(format!(
            "archive complements {archived:?} do not match panel complements {ids:?}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// forecasts

/// One-step-ahead forecasts of one series, aligned with its days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub label: String,
    pub days: Vec<usize>,
    pub observed: Vec<Option<f64>>,
    pub predicted: Vec<f64>,
    pub sd: Vec<f64>,
    pub mad: f64,
    pub mse: f64,
}

/// MAD and MSE over days with an observation, skipping the first day, whose
/// forecast is the filter initialization.
pub fn forecast_errors(observed: &[Option<f64>], predicted: &[f64]) -> (f64, f64) {
    let errs: Vec<f64> = observed.iter().zip(predicted).skip(1).filter_map(|(y, p)| y.map(|y| y - p)).collect();
    if errs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = errs.len() as f64;
    (errs.iter().map(|e| e.abs()).sum::<f64>() / n, errs.iter().map(|e| e * e).sum::<f64>() / n)
}

fn series(label: String, first_day: usize, observed: &[Option<f64>], out: &FilterOutput) -> ForecastSeries {
    let (mad, mse) = forecast_errors(observed, &out.fc_mean);
    ForecastSeries {
        label,
        days: (first_day..first_day + observed.len()).collect(),
        observed: observed.to_vec(),
        predicted: out.fc_mean.clone(),
        sd: out.fc_var.iter().map(|v| v.sqrt()).collect(),
        mad,
        mse,
    }
}

/// `E[y_t | y_{1:t-1}]` from the EKF predictive for the platform and every
/// complement at fixed parameters. Complement forecasts condition on the
/// platform filtered mean of the previous day, so nothing after `t-1` enters.
pub fn one_step_forecast(
    panel: &ObservationPanel,
    platform: &PlatformParams,
    complements: &[ComplementParams],
    platform_init: FilterInit,
    complement_inits: &[FilterInit],
) -> Result<Vec<ForecastSeries>> {
    let jf = joint_filter(panel, platform, complements, platform_init, complement_inits, &FilterOptions::default())?;
    let mut out = vec![series("platform".into(), 1, &panel.platform.observations, &jf.platform)];
    for (c, f) in panel.complements.iter().zip(&jf.complements) {
        out.push(series(c.id.clone(), c.launch, &c.observations, f));
    }
    Ok(out)
}

/// Forecasts at the posterior mean of an archive.
pub fn forecast_from_archive(archive: &DrawArchive, panel: &ObservationPanel) -> Result<Vec<ForecastSeries>> {
    check_archive_matches(archive, panel)?;
    let (p, cs) = archive.posterior_mean()?;
    let h = &archive.header;
    one_step_forecast(panel, &p, &cs, h.platform_init, &h.complement_inits)
}

/// Random-walk baseline `y_hat_t = y_{t-1}` (last available observation).
pub fn random_walk_errors(observed: &[Option<f64>]) -> (f64, f64) {
    let mut last = None;
    let predicted: Vec<f64> = observed
        .iter()
        .map(|y| {
            let p = last.unwrap_or(f64::NAN);
            if y.is_some() {
                last = *y;
            }
            p
        })
        .collect();
    forecast_errors(observed, &predicted)
}

// ---------------------------------------------------------------------------
// variants

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    pub churn_on: bool,
    pub version_carryover_on: bool,
    pub amo_on: bool,
    pub interactions_on: bool,
    pub explain_internal_force: bool,
    pub explain_external_force: bool,
    pub explain_churn: bool,
    pub addon_effect_on_platform_on: bool,
    pub explain_relevance: bool,
}

impl VariantSpec {
    pub fn proposed() -> Self {
        Self {
            name: "Proposed Model".into(),
            churn_on: true,
            version_carryover_on: true,
            amo_on: true,
            interactions_on: false,
            explain_internal_force: true,
            explain_external_force: true,
            explain_churn: true,
            addon_effect_on_platform_on: true,
            explain_relevance: true,
        }
    }

    fn with(name: &str, f: impl FnOnce(&mut Self)) -> Self {
        let mut v = Self::proposed();
        v.name = name.into();
        f(&mut v);
        v
    }

    /// The ten comparison rows, proposed model last.
    pub fn catalogue() -> Vec<Self> {
        vec![
            Self::with("No Churn", |v| v.churn_on = false),
            Self::with("No Version Carry Over", |v| v.version_carryover_on = false),
            Self::with("No AMO effect on platform", |v| v.amo_on = false),
            Self::with("Interaction model", |v| v.interactions_on = true),
            Self::with("Unexplained internal market force of add-ons", |v| v.explain_internal_force = false),
            Self::with("Unexplained external market force of add-ons", |v| v.explain_external_force = false),
            Self::with("Unexplained churn", |v| v.explain_churn = false),
            Self::with("No cumulative effect of add-on creation on platform", |v| {
                v.addon_effect_on_platform_on = false
            }),
            Self::with("Unexplained relevance factor", |v| v.explain_relevance = false),
            Self::proposed(),
        ]
    }

    /// Look up a catalogue entry by name (case-insensitive) or 1-based row.
    pub fn named(name: &str) -> Result<Self> {
        let cat = Self::catalogue();
        if let Ok(row) = name.trim().parse::<usize>() {
            return cat.get(row.wrapping_sub(1)).cloned().ok_or_else(|| Error::UnknownVariant(name.into()));
        }
        let key = normalize(name);
        cat.into_iter()
            .find(|v| normalize(&v.name) == key || (key == "proposed" && v.name == "Proposed Model"))
            .ok_or_else(|| Error::UnknownVariant(name.into()))
    }
}

fn normalize(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

/// Model configuration of a variant. Unexplained churn and relevance keep
/// delta and alpha free but regress them on an intercept only.
pub fn build_variant(spec: &VariantSpec) -> ModelConfig {
    let mut explained = [true; crate::model::THETA_DIM];
    explained[0] = spec.explain_relevance;
    explained[1] = spec.explain_churn;
    ModelConfig {
        no_churn: !spec.churn_on,
        no_governance: !spec.amo_on,
        no_addon_effect: !spec.addon_effect_on_platform_on,
        no_external_covariates: !spec.explain_external_force,
        no_internal_covariates: !spec.explain_internal_force,
        interactions: spec.interactions_on,
        no_release_carryover: !spec.version_carryover_on,
        explained,
    }
}

/// The panel a variant is fitted to: without release carry-over the smoothed
/// release signals are replaced by release-day indicators.
pub fn variant_panel(panel: &ObservationPanel, model: &ModelConfig) -> Result<ObservationPanel> {
    let mut out = panel.clone();
    if model.no_release_carryover {
        crate::preprocess::rebuild_release_signals(&mut out, true)?;
    }
    Ok(out)
}

/// Fit one variant and score it.
pub fn fit_variant(
    panel: &ObservationPanel,
    spec: &VariantSpec,
    priors: &crate::sampler::PriorConfig,
    mcmc: &crate::sampler::McmcConfig,
) -> Result<(DrawArchive, DicSummary)> {
    let model = build_variant(spec);
    let panel = variant_panel(panel, &model)?;
    let archive = crate::sampler::run_chain(&panel, priors, mcmc, &model)?;
    let d = dic(&archive, &panel)?;
    Ok((archive, d))
}

// ---------------------------------------------------------------------------
// convergence

/// Potential scale reduction on split chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split(chains);
    let m = halves.len() as f64;
    let n = halves.iter().map(Vec::len).min().unwrap_or(0);
    if halves.len() < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|c| mean(&c[..n])).collect();
    let w = halves.iter().map(|c| sample_var(&c[..n])).sum::<f64>() / m;
    let b = n as f64 * sample_var(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [c[..h].to_vec(), c[c.len() - h..].to_vec()]
        })
        .collect()
}

/// Multi-chain effective sample size with Geyer's initial positive sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| sample_var(c)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 { sample_var(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let autocov = |c: &[f64], mu: f64, lag: usize| -> f64 {
        (0..n - lag).map(|t| (c[t] - mu) * (c[t + lag] - mu)).sum::<f64>() / n as f64
    };
    let rho = |lag: usize| -> f64 {
        let acov = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / ((m * n) as f64).log10().max(1.0));
    (m * n) as f64 / tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<TraceSummary>,
    /// Post-burn-in MH acceptance, averaged over chains.
    pub acceptance: BTreeMap<String, f64>,
}

/// Minimum single-chain draws for a convergence report.
pub const MIN_SINGLE_CHAIN_DRAWS: usize = 1000;

/// Convergence summary from raw named traces (one vector per chain).
pub fn convergence_from_traces(
    traces: &[(String, Vec<Vec<f64>>)],
    acceptance: BTreeMap<String, f64>,
) -> Result<ConvergenceReport> {
    let chains = traces.first().map_or(0, |t| t.1.len());
    let draws = traces.iter().flat_map(|t| t.1.iter().map(Vec::len)).min().unwrap_or(0);
    if chains == 0 || (chains < 2 && draws < MIN_SINGLE_CHAIN_DRAWS) || draws < 4 {
        return Err(Error::InsufficientDraws(format!(
            "{chains} chain(s) of {draws} draws; need 2 chains or {MIN_SINGLE_CHAIN_DRAWS} draws"
        )));
    }
    let parameters = traces
        .iter()
        .map(|(name, cs)| {
            let pooled: Vec<f64> = cs.iter().flatten().copied().collect();
            TraceSummary {
                name: name.clone(),
                mean: mean(&pooled),
                sd: sample_var(&pooled).sqrt(),
                rhat: split_rhat(cs),
                ess: effective_sample_size(cs),
            }
        })
        .collect();
    Ok(ConvergenceReport { chains, draws_per_chain: draws, parameters, acceptance })
}

/// Convergence summary of one or more archives of the same model.
pub fn convergence_report(archives: &[DrawArchive]) -> Result<ConvergenceReport> {
    let Some(first) = archives.first() else {
        return Err(Error::InsufficientDraws("no archive".into()));
    };
    let per_chain: Vec<Vec<(String, Vec<f64>)>> = archives.iter().map(DrawArchive::traces).collect();
    let traces: Vec<(String, Vec<Vec<f64>>)> = per_chain[0]
        .iter()
        .enumerate()
        .map(|(k, (name, _))| (name.clone(), per_chain.iter().map(|c| c[k].1.clone()).collect()))
        .collect();
    let mut acceptance = BTreeMap::new();
    for key in first.stats.acceptance.keys() {
        let rates: Vec<f64> = archives.iter().filter_map(|a| a.stats.acceptance.get(key).copied()).collect();
        acceptance.insert(key.clone(), mean(&rates));
    }
    convergence_from_traces(&traces, acceptance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::std_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_draws_have_zero_pd() {
        let s = dic_from_deviances(&[10.0; 50], 10.0).unwrap();
        assert_eq!(s.p_d, 0.0);
        assert_eq!(s.dic, 10.0);
        assert_eq!(s.dic, -2.0 * s.ll_at_mean + 2.0 * s.p_d);
    }

    #[test]
    fn gaussian_mean_model_has_one_effective_parameter() {
        // y_i ~ N(mu, 1), flat prior: mu | y ~ N(ybar, 1/n).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..100).map(|_| 3.0 + std_normal(&mut rng)).collect();
        let ybar = mean(&y);
        let n = y.len() as f64;
        let dev = |mu: f64| y.iter().map(|v| (v - mu).powi(2) + (2.0 * std::f64::consts::PI).ln()).sum::<f64>();
        let draws: Vec<f64> = (0..10_000).map(|_| ybar + std_normal(&mut rng) / n.sqrt()).collect();
        let devs: Vec<f64> = draws.iter().map(|&m| dev(m)).collect();
        let s = dic_from_deviances(&devs, dev(mean(&draws))).unwrap();
        assert!((s.p_d - 1.0).abs() < 0.1, "p_D = {}", s.p_d);
    }

    #[test]
    fn non_finite_deviance_is_an_error() {
        assert!(matches!(dic_from_deviances(&[1.0, f64::NAN], 1.0), Err(Error::NonFiniteDeviance)));
    }

    #[test]
    fn catalogue_maps_rows_to_pins() {
        let no_churn = build_variant(&VariantSpec::named("No Churn").unwrap());
        assert!(no_churn.no_churn);
        assert!(!no_churn.theta_active()[1]);
        let ext = build_variant(&VariantSpec::named("6").unwrap());
        assert!(ext.no_external_covariates);
        let active = ext.theta_active();
        assert!(!active[3] && !active[4]);
        assert_eq!(build_variant(&VariantSpec::proposed()), ModelConfig::default());
        assert!(matches!(VariantSpec::named("no such model"), Err(Error::UnknownVariant(_))));
        let names: Vec<String> = VariantSpec::catalogue().into_iter().map(|v| v.name).collect();
        assert_eq!(names.len(), 10);
    }

    #[test]
    fn rhat_of_iid_normals_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let chains: Vec<Vec<f64>> = (0..4).map(|_| (0..2000).map(|_| std_normal(&mut rng)).collect()).collect();
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.02, "rhat {r}");
        let ess = effective_sample_size(&chains);
        assert!(ess > 5000.0, "ess {ess}");
    }

    #[test]
    fn rhat_detects_stuck_chains() {
        let chains = vec![vec![0.0; 500], vec![1.0; 500]];
        assert!(split_rhat(&chains) > 10.0);
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with coefficient phi has integrated autocorrelation (1+phi)/(1-phi).
        let phi: f64 = 0.8;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = 0.0;
        let chain: Vec<f64> = (0..100_000)
            .map(|_| {
                x = phi * x + (1.0 - phi * phi).sqrt() * std_normal(&mut rng);
                x
            })
            .collect();
        let ess = effective_sample_size(&[chain]);
        let expected = 100_000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((ess / expected - 1.0).abs() < 0.15, "{ess} vs {expected}");
    }

    #[test]
    fn random_walk_baseline_uses_last_observation() {
        let obs = vec![Some(1.0), Some(2.0), None, Some(5.0)];
        let (mad, mse) = random_walk_errors(&obs);
        assert_eq!(mad, 2.0);
        assert_eq!(mse, 5.0);
    }
}
