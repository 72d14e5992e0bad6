//! Synthetic panels drawn from the full generative model.
//!
//! Covariates are generated in raw units and pushed through the same
//! standardization as real data, so the emitted panel and transforms look
//! exactly like the output of [`crate::preprocess::assemble_panel`].

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    complement_drift, complement_forces, market_potential, platform_drift, platform_external_force, ComplementFrame,
    ComplementParams, HierarchyDesign, PlatformFrame, PlatformParams, THETA_DIM,
};
use crate::panel::{ComplementSeries, ObservationPanel, PlatformSeries, TransformSet};
use crate::preprocess::{smooth_releases, standardize, Policy, ReleaseLog, Scale, DEFAULT_RELEASE_DECAY};
use crate::stats::{logistic, std_normal};

pub const TRUTH_SCHEMA: &str = "jointdiff.truth/1";

/// Attempts per step before a negative state draw is declared explosive.
const MAX_STEP_ATTEMPTS: usize = 1000;

/// Recipes for the stochastic covariate generator (raw units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRecipe {
    /// AR(1) coefficient and innovation sd of competitor usage.
    pub competitor_ar: f64,
    pub competitor_sd: f64,
    /// Daily AMO contributions: AR(1) around a positive mean.
    pub effort_mean: f64,
    pub effort_ar: f64,
    pub effort_sd: f64,
    /// Nomination-queue length: AR(1) around a positive mean.
    pub queue_mean: f64,
    pub queue_ar: f64,
    pub queue_sd: f64,
    /// Cumulative add-ons: initial stock plus Poisson-like daily arrivals.
    pub addons_initial: f64,
    pub addons_rate: f64,
    /// Daily release probability (platform and every complement).
    pub release_rate: f64,
    /// Ratings: bounded random walks for the mean (1..5) and variance (0..4).
    pub rating_start: f64,
    pub rating_var_start: f64,
    pub rating_step_sd: f64,
    /// Log-usage random-walk step sd, for observational learning.
    pub usage_step_sd: f64,
    pub categories: usize,
}

impl Default for CovariateRecipe {
    fn default() -> Self {
        Self {
            competitor_ar: 0.95,
            competitor_sd: 1.0,
            effort_mean: 40.0,
            effort_ar: 0.9,
            effort_sd: 10.0,
            queue_mean: 20.0,
            queue_ar: 0.9,
            queue_sd: 4.0,
            addons_initial: 200.0,
            addons_rate: 5.0,
            release_rate: 0.02,
            rating_start: 4.0,
            rating_var_start: 1.0,
            rating_step_sd: 0.05,
            usage_step_sd: 0.1,
            categories: 3,
        }
    }
}

/// Covariates supplied directly in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedCovariates {
    pub platform: Vec<PlatformFrame>,
    /// One window of frames per complement.
    pub complements: Vec<Vec<ComplementFrame>>,
    #[serde(default)]
    pub effort_raw: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariates {
    Stochastic(CovariateRecipe),
    Fixed(FixedCovariates),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon: usize,
    /// Launch day per complement; each complement is observed to the horizon.
    pub launches: Vec<usize>,
    pub platform: PlatformParams,
    pub complements: Vec<ComplementParams>,
    /// When set, the parameter vectors are drawn around the design mean:
    /// logit(alpha), logit(delta) and the seven force coefficients are each
    /// `D_j·eta + N(0, residual_var)`; the noise variances stay as given.
    pub hierarchy: Option<HierarchyDesign>,
    /// Dummy rows per complement (without intercept), written to the panel.
    pub dummies: Vec<Vec<f64>>,
    pub covariates: Covariates,
    /// `m_0 = initial_platform_fraction · M0` unless `initial_platform` is set.
    pub initial_platform_fraction: f64,
    #[serde(default)]
    pub initial_platform: Option<f64>,
    pub initial_complement: f64,
    pub release_decay: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn n_complements(&self) -> usize {
        self.launches.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidParameter(format!("horizon {} < 2", self.horizon)));
        }
        if self.complements.len() != self.launches.len() || self.dummies.len() != self.launches.len() {
            return Err(Error::DimensionMismatch {
                what: "complement parameters, dummies and launches",
                expected: self.launches.len(),
                got: self.complements.len().min(self.dummies.len()),
            });
        }
        if let Some(&l) = self.launches.iter().find(|&&l| l < 1 || l > self.horizon) {
            return Err(Error::WindowViolation(format!("launch day {l} outside [1, {}]", self.horizon)));
        }
        let p = &self.platform;
        if !(p.m0 > 0.0) || p.obs_var < 0.0 || p.state_var < 0.0 {
            return Err(Error::InvalidParameter("platform needs M0 > 0 and nonnegative variances".into()));
        }
        for c in &self.complements {
            if !(c.alpha > 0.0 && c.alpha < 1.0)
                || !(0.0..1.0).contains(&c.delta)
                || c.obs_var < 0.0
                || c.state_var < 0.0
            {
                return Err(Error::InvalidParameter(format!("invalid complement parameters {c:?}")));
            }
        }
        if let Covariates::Fixed(f) = &self.covariates {
            if f.platform.len() != self.horizon {
                return Err(Error::DimensionMismatch {
                    what: "fixed platform frames",
                    expected: self.horizon,
                    got: f.platform.len(),
                });
            }
            for (frames, &l) in f.complements.iter().zip(&self.launches) {
                if frames.len() != self.horizon + 1 - l {
                    return Err(Error::DimensionMismatch {
                        what: "fixed complement frames",
                        expected: self.horizon + 1 - l,
                        got: frames.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// True parameters and latent paths of a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub platform: PlatformParams,
    pub complements: Vec<ComplementParams>,
    /// Initial platform state `m_0` (the day before day 1).
    pub platform_initial: f64,
    /// `platform_path[d - 1]` is the state on day `d`.
    pub platform_path: Vec<f64>,
    /// Per complement, states over its window.
    pub complement_paths: Vec<Vec<f64>>,
    pub rejections: usize,
    pub draws: usize,
}

impl Truth {
    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct File<'a> {
            schema: &'a str,
            #[serde(flatten)]
            truth: &'a Truth,
        }
        let text = serde_json::to_string_pretty(&File { schema: TRUTH_SCHEMA, truth: self })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: ObservationPanel,
    pub transforms: TransformSet,
    pub truth: Truth,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn ar1(n: usize, mean: f64, phi: f64, sd: f64, floor: Option<f64>, rng: &mut impl Rng) -> Vec<f64> {
    let stationary_sd = sd / (1.0 - phi * phi).max(1e-12).sqrt();
    let mut x = mean + stationary_sd * std_normal(rng);
    (0..n)
        .map(|_| {
            x = mean + phi * (x - mean) + sd * std_normal(rng);
            if let Some(f) = floor {
                x = x.max(f);
            }
            x
        })
        .collect()
}

fn bounded_walk(n: usize, start: f64, lo: f64, hi: f64, sd: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x = start;
    (0..n)
        .map(|_| {
            x = (x + sd * std_normal(rng)).clamp(lo, hi);
            x
        })
        .collect()
}

fn release_days(start: usize, end: usize, rate: f64, rng: &mut impl Rng) -> Vec<usize> {
    (start..=end).filter(|_| rng.random::<f64>() < rate).collect()
}

fn demeaned(name: &str, xs: &[f64], transforms: &mut TransformSet) -> Result<Vec<f64>> {
    let (out, rec) = standardize(name, xs, Policy::Demean)?;
    transforms.push(rec);
    Ok(out)
}

struct GeneratedCovariates {
    platform: Vec<PlatformFrame>,
    complements: Vec<Vec<ComplementFrame>>,
    effort_raw: Option<Vec<f64>>,
    platform_releases: Vec<usize>,
    complement_releases: Vec<Vec<usize>>,
    categories: Vec<String>,
    transforms: TransformSet,
}

fn generate_covariates(cfg: &SimulationConfig, recipe: &CovariateRecipe) -> Result<GeneratedCovariates> {
    let t = cfg.horizon;
    let mut rng = stream(cfg.seed, 0);
    let mut transforms = TransformSet::default();
    let nx = cfg.platform.beta.len();
    let nz = cfg.platform.rho.len();

    let mut competitors = Vec::with_capacity(nx);
    for i in 0..nx {
        let raw = ar1(t, 0.0, recipe.competitor_ar, recipe.competitor_sd, None, &mut rng);
        let (z, rec) = standardize(&format!("platform.competitor{i}"), &raw, Policy::DemeanThenRescale(Scale::MaxAbs))?;
        transforms.push(rec);
        competitors.push(z);
    }
    let mut governance = Vec::with_capacity(nz);
    let mut effort_raw = None;
    for i in 0..nz {
        let (name, raw) = match i {
            0 => (
                "platform.effort".to_string(),
                ar1(t, recipe.effort_mean, recipe.effort_ar, recipe.effort_sd, Some(0.0), &mut rng),
            ),
            1 => (
                "platform.queue".to_string(),
                ar1(t, recipe.queue_mean, recipe.queue_ar, recipe.queue_sd, Some(0.0), &mut rng),
            ),
            _ => (format!("platform.governance{i}"), ar1(t, 0.0, 0.9, 1.0, None, &mut rng)),
        };
        let (z, rec) = standardize(&name, &raw, Policy::DemeanThenRescale(Scale::MaxAbs))?;
        transforms.push(rec);
        governance.push(z);
        if i == 0 {
            effort_raw = Some(raw);
        }
    }
    let mut stock = recipe.addons_initial;
    let addons_raw: Vec<f64> = (0..t)
        .map(|_| {
            // Poisson arrivals approximated by a rounded, floored normal
            stock += (recipe.addons_rate + recipe.addons_rate.sqrt() * std_normal(&mut rng)).round().max(0.0);
            stock
        })
        .collect();
    let (addons, rec) = standardize("platform.addons", &addons_raw, Policy::Rescale(Scale::MaxAbs))?;
    transforms.push(rec);
    let platform: Vec<PlatformFrame> = (0..t)
        .map(|i| PlatformFrame {
            x: competitors.iter().map(|c| c[i]).collect(),
            z: governance.iter().map(|c| c[i]).collect(),
            addons: addons[i],
        })
        .collect();

    let platform_releases = release_days(1, t, recipe.release_rate, &mut rng);
    let pv_full = smooth_releases(&ReleaseLog::new("platform", platform_releases.clone())?, cfg.release_decay, 1, t)?;

    let j = cfg.n_complements();
    let categories: Vec<String> = (0..j).map(|i| format!("category{}", i % recipe.categories.max(1))).collect();
    // log-usage random walks, zero usage outside the window
    let usage: Vec<Vec<f64>> = cfg
        .launches
        .iter()
        .map(|&l| {
            let mut u = 0.0f64;
            (1..=t)
                .map(|d| {
                    if d < l {
                        0.0
                    } else {
                        u += recipe.usage_step_sd * std_normal(&mut rng);
                        u.exp()
                    }
                })
                .collect()
        })
        .collect();

    let mut complements = Vec::with_capacity(j);
    let mut complement_releases = Vec::with_capacity(j);
    for (k, &l) in cfg.launches.iter().enumerate() {
        let id = format!("c{k:03}");
        let n = t + 1 - l;
        let releases = release_days(l, t, recipe.release_rate, &mut rng);
        let av_raw = smooth_releases(&ReleaseLog::new(id.clone(), releases.clone())?, cfg.release_decay, l, t)?;
        let stavg_raw = bounded_walk(n, recipe.rating_start, 1.0, 5.0, recipe.rating_step_sd, &mut rng);
        let rtv_raw = bounded_walk(n, recipe.rating_var_start, 0.0, 4.0, recipe.rating_step_sd, &mut rng);
        let ol_raw: Vec<f64> = (l..=t)
            .map(|d| {
                if d == 1 {
                    return 0.0;
                }
                let total: f64 = (0..j).filter(|&o| categories[o] == categories[k]).map(|o| usage[o][d - 2]).sum();
                if total > 0.0 {
                    usage[k][d - 2] / total
                } else {
                    0.0
                }
            })
            .collect();
        let pv = demeaned(&format!("complement.{id}.pv"), &pv_full[l - 1..], &mut transforms)?;
        let av = demeaned(&format!("complement.{id}.av"), &av_raw, &mut transforms)?;
        let rtv = demeaned(&format!("complement.{id}.rtv"), &rtv_raw, &mut transforms)?;
        let stavg = demeaned(&format!("complement.{id}.stavg"), &stavg_raw, &mut transforms)?;
        let ol = demeaned(&format!("complement.{id}.ol"), &ol_raw, &mut transforms)?;
        complements.push(
            (0..n).map(|i| ComplementFrame { pv: pv[i], av: av[i], rtv: rtv[i], stavg: stavg[i], ol: ol[i] }).collect(),
        );
        complement_releases.push(releases);
    }
    Ok(GeneratedCovariates {
        platform,
        complements,
        effort_raw,
        platform_releases,
        complement_releases,
        categories,
        transforms,
    })
}

/// Draw one nonnegative state `mean + sd·z`, redrawing negative values.
fn draw_state(mean: f64, sd: f64, rng: &mut impl Rng, rejections: &mut usize, draws: &mut usize) -> Result<f64> {
    for _ in 0..MAX_STEP_ATTEMPTS {
        *draws += 1;
        let x = if sd > 0.0 { mean + sd * std_normal(rng) } else { mean };
        if x >= 0.0 && x.is_finite() {
            return Ok(x);
        }
        *rejections += 1;
        if sd == 0.0 || !x.is_finite() {
            break;
        }
    }
    Err(Error::ExplosiveTrajectory { rejections: *rejections, draws: *draws })
}

fn draw_complement_params(cfg: &SimulationConfig, rng: &mut impl Rng) -> Result<Vec<ComplementParams>> {
    let Some(h) = &cfg.hierarchy else {
        return Ok(cfg.complements.clone());
    };
    let mut out = cfg.complements.clone();
    for (j, c) in out.iter_mut().enumerate() {
        let mean = h.mean_theta(j)?;
        let mut theta = [0.0; THETA_DIM];
        for k in 0..THETA_DIM {
            theta[k] = mean[k] + h.residual_var[k].sqrt() * std_normal(rng);
        }
        theta[0] = logistic(theta[0]);
        theta[1] = logistic(theta[1]);
        c.set_theta(&theta);
    }
    Ok(out)
}

/// Simulate a panel and its latent paths.
pub fn simulate_panel(cfg: &SimulationConfig) -> Result<Simulation> {
    cfg.validate()?;
    let t = cfg.horizon;
    let gen = match &cfg.covariates {
        Covariates::Stochastic(recipe) => generate_covariates(cfg, recipe)?,
        Covariates::Fixed(f) => GeneratedCovariates {
            platform: f.platform.clone(),
            complements: f.complements.clone(),
            effort_raw: f.effort_raw.clone(),
            platform_releases: Vec::new(),
            complement_releases: vec![Vec::new(); cfg.n_complements()],
            categories: vec!["category0".into(); cfg.n_complements()],
            transforms: TransformSet::default(),
        },
    };
    let complements = draw_complement_params(cfg, &mut stream(cfg.seed, 1))?;
    let (mut rejections, mut draws) = (0usize, 0usize);

    let p = &cfg.platform;
    let m_init = cfg.initial_platform.unwrap_or(cfg.initial_platform_fraction * p.m0);
    let mut rng = stream(cfg.seed, 2);
    let mut m_path = Vec::with_capacity(t);
    let mut y_p = Vec::with_capacity(t);
    let mut m = m_init;
    for (i, f) in gen.platform.iter().enumerate() {
        let force = platform_external_force(p, f)?;
        let pot = market_potential(p.m0, p.kappa, f.addons)
            .map_err(|_| Error::NonPositivePotential { day: i + 1, value: p.m0 + p.kappa * f.addons })?;
        let mean = m + platform_drift(m, force, p.q, pot)?;
        m = draw_state(mean, p.state_var.sqrt(), &mut rng, &mut rejections, &mut draws)?;
        m_path.push(m);
        y_p.push(Some(m + p.obs_var.sqrt() * std_normal(&mut rng)));
    }

    let mut complement_series = Vec::with_capacity(cfg.n_complements());
    let mut n_paths = Vec::with_capacity(cfg.n_complements());
    for (j, (&launch, params)) in cfg.launches.iter().zip(&complements).enumerate() {
        let mut rng = stream(cfg.seed, 3 + j as u64);
        let frames = &gen.complements[j];
        let mut n = cfg.initial_complement;
        let mut path = Vec::with_capacity(frames.len());
        let mut obs = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            let day = launch + i;
            let m_prev = if day >= 2 { m_path[day - 2] } else { m_init };
            let (pj, qj) = complement_forces(params, f);
            let mean = n + complement_drift(n, m_prev, pj, qj, params.alpha, params.delta)?;
            n = draw_state(mean, params.state_var.sqrt(), &mut rng, &mut rejections, &mut draws)?;
            path.push(n);
            obs.push(Some(n + params.obs_var.sqrt() * std_normal(&mut rng)));
        }
        complement_series.push(ComplementSeries {
            id: format!("c{j:03}"),
            category: gen.categories[j].clone(),
            launch,
            end: t,
            observations: obs,
            frames: frames.clone(),
            dummies: cfg.dummies[j].clone(),
            releases: gen.complement_releases[j].clone(),
        });
        n_paths.push(path);
    }
    if draws > 0 && rejections * 2 > draws {
        return Err(Error::ExplosiveTrajectory { rejections, draws });
    }

    let panel = ObservationPanel {
        horizon: t,
        start_date: None,
        platform: PlatformSeries { observations: y_p, frames: gen.platform, effort_raw: gen.effort_raw },
        complements: complement_series,
        platform_releases: gen.platform_releases,
        release_decay: cfg.release_decay,
    };
    panel.validate()?;
    Ok(Simulation {
        panel,
        transforms: gen.transforms,
        truth: Truth {
            seed: cfg.seed,
            platform: cfg.platform.clone(),
            complements,
            platform_initial: m_init,
            platform_path: m_path,
            complement_paths: n_paths,
            rejections,
            draws,
        },
    })
}

/// Default complement parameters, shared by every complement.
pub fn default_complement() -> ComplementParams {
    ComplementParams {
        alpha: 0.0142,
        delta: 0.0174,
        p0: 0.0087,
        p1: 0.0047,
        p2: 0.0059,
        q0: 0.0057,
        q1: 0.0131,
        q2: 0.0054,
        q3: 0.0043,
        interaction: [0.0; 3],
        obs_var: 0.0002,
        state_var: 0.0002,
    }
}

/// Default platform parameters. Competitor order is
/// (Chrome, IE); governance order is (AMO contributions, queue length).
pub fn default_platform() -> PlatformParams {
    PlatformParams {
        p0: 1.76e-3,
        beta: vec![-4.91e-5, -5.66e-4],
        rho: vec![3.42e-5, 3.52e-5],
        q: 1.27e-8,
        m0: 1.54e-2,
        kappa: 3.60e-2,
        obs_var: 1.44e-2,
        state_var: 1.12e-1,
    }
}

/// Initial platform state of [`default_truth`]. The published state noise
/// (sd ~0.33 per day) dwarfs the published market potential (~0.05), so a
/// path started near `M0` wanders down to zero, where the complement ratio
/// `n/(alpha·m)` explodes. Starting well above that range keeps the platform
/// away from zero over the horizon.
pub const DEFAULT_TRUTH_INITIAL_PLATFORM: f64 = 40.0;

/// Ready-made configuration at the published posterior means: T = 500,
/// J = 8 complements launched every 30 days from day 1, intercept-only
/// design (no dummies), stochastic covariates.
pub fn default_truth() -> SimulationConfig {
    let j = 8;
    SimulationConfig {
        horizon: 500,
        launches: (0..j).map(|i| 1 + 30 * i).collect(),
        platform: default_platform(),
        complements: vec![default_complement(); j],
        hierarchy: None,
        dummies: vec![Vec::new(); j],
        covariates: Covariates::Stochastic(CovariateRecipe::default()),
        initial_platform_fraction: 0.05,
        initial_platform: Some(DEFAULT_TRUTH_INITIAL_PLATFORM),
        initial_complement: 0.0,
        release_decay: DEFAULT_RELEASE_DECAY,
        seed: 0,
    }
}
