//! Key-value run configuration.
//!
//! One `key = value` pair per line, keys dotted by section
//! (`sampler.iterations = 4000`). A `[section]` line prefixes the keys that
//! follow it. `#` starts a comment. Environment variables named
//! `JOINTDIFF_<SECTION>__<KEY>` override file entries, e.g.
//! `JOINTDIFF_SAMPLER__ITERATIONS=500`.
//!
//! One file can serve every subcommand: [`validate_all`] parses each known
//! section up front and rejects unknown keys, so typos do not pass silently.
//! A `[notes]` section is free-form and ignored.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::allocator::{GaConfig, Granularity};
use crate::diagnostics::{build_variant, VariantSpec};
use crate::endogeneity::{LivConfig, LivModel};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::preprocess::PreprocessConfig;
use crate::sampler::{McmcConfig, PriorConfig};
use crate::simulate::{default_truth, SimulationConfig};
use crate::stats::{InverseGamma, Normal};

pub const ENV_PREFIX: &str = "JOINTDIFF_";

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Apply overrides from `(name, value)` pairs, keeping those with the prefix.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                self.entries.insert(key, value);
            }
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Canonical `key=value` text, sorted by key.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    /// Marks every key under `section.` as consumed.
    pub fn ignore_section(&self, section: &str) {
        let prefix = format!("{section}.");
        let mut used = self.used.borrow_mut();
        for k in self.entries.keys().filter(|k| k.starts_with(&prefix)) {
            used.insert(k.clone());
        }
    }

    /// Fails on any key that was never read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.entries.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

// ---------------------------------------------------------------------------
// typed sections

fn normal(cfg: &Config, key: &str, default: Normal) -> Result<Normal> {
    Ok(Normal::new(cfg.get_or(&format!("{key}.mean"), default.mean)?, cfg.get_or(&format!("{key}.var"), default.var)?))
}

fn inverse_gamma(cfg: &Config, key: &str, default: InverseGamma) -> Result<InverseGamma> {
    Ok(InverseGamma::new(
        cfg.get_or(&format!("{key}.shape"), default.shape)?,
        cfg.get_or(&format!("{key}.scale"), default.scale)?,
    ))
}

/// `simulate.*`: the default truth with overridable size and noise.
pub fn simulation_config(cfg: &Config, seed: u64) -> Result<SimulationConfig> {
    let mut sim = default_truth();
    sim.seed = seed;
    sim.horizon = cfg.get_or("simulate.horizon", sim.horizon)?;
    let spacing: usize = cfg.get_or("simulate.launch_spacing", 30)?;
    // by default keep the complements that launch inside a shortened horizon
    let fit = (0..sim.n_complements()).filter(|i| spacing * i < sim.horizon).count();
    let j: usize = cfg.get_or("simulate.complements", fit)?;
    sim.launches = (0..j).map(|i| 1 + spacing * i).collect();
    sim.complements = vec![sim.complements[0].clone(); j];
    sim.dummies = vec![Vec::new(); j];
    let p = &mut sim.platform;
    p.m0 = cfg.get_or("simulate.m0", p.m0)?;
    p.kappa = cfg.get_or("simulate.kappa", p.kappa)?;
    p.obs_var = cfg.get_or("simulate.platform_obs_var", p.obs_var)?;
    p.state_var = cfg.get_or("simulate.platform_state_var", p.state_var)?;
    if let Some(m) = cfg.get("simulate.initial_platform")? {
        sim.initial_platform = Some(m);
    }
    for c in sim.complements.iter_mut() {
        c.alpha = cfg.get_or("simulate.alpha", c.alpha)?;
        c.delta = cfg.get_or("simulate.delta", c.delta)?;
        c.obs_var = cfg.get_or("simulate.complement_obs_var", c.obs_var)?;
        c.state_var = cfg.get_or("simulate.complement_state_var", c.state_var)?;
    }
    sim.release_decay = cfg.get_or("simulate.release_decay", sim.release_decay)?;
    sim.validate()?;
    Ok(sim)
}

/// `sampler.*`.
pub fn mcmc_config(cfg: &Config, seed: u64) -> Result<McmcConfig> {
    let d = McmcConfig::default();
    let m = McmcConfig {
        iterations: cfg.get_or("sampler.iterations", d.iterations)?,
        burn_in: cfg.get("sampler.burn_in")?,
        thin: cfg.get_or("sampler.thin", d.thin)?,
        seed,
        path_every: cfg.get_or("sampler.path_every", d.path_every)?,
        adapt_every: cfg.get_or("sampler.adapt_every", d.adapt_every)?,
        target_accept: cfg.get_or("sampler.target_accept", d.target_accept)?,
    };
    m.validate()?;
    Ok(m)
}

/// `priors.*`.
pub fn prior_config(cfg: &Config) -> Result<PriorConfig> {
    let d = PriorConfig::default();
    let mut h = d.hyper;
    h.logit_mean = cfg.get_or("priors.hyper.logit_mean", h.logit_mean)?;
    h.coef_mean = cfg.get_or("priors.hyper.coef_mean", h.coef_mean)?;
    h.logit_scale = cfg.get_or("priors.hyper.logit_scale", h.logit_scale)?;
    h.coef_scale = cfg.get_or("priors.hyper.coef_scale", h.coef_scale)?;
    h.residual = inverse_gamma(cfg, "priors.hyper.residual", h.residual)?;
    let p = PriorConfig {
        coefficient: normal(cfg, "priors.coefficient", d.coefficient)?,
        m0: normal(cfg, "priors.m0", d.m0)?,
        kappa: normal(cfg, "priors.kappa", d.kappa)?,
        interaction: normal(cfg, "priors.interaction", d.interaction)?,
        platform_obs_var: inverse_gamma(cfg, "priors.platform_obs_var", d.platform_obs_var)?,
        platform_state_var: inverse_gamma(cfg, "priors.platform_state_var", d.platform_state_var)?,
        complement_obs_var: inverse_gamma(cfg, "priors.complement_obs_var", d.complement_obs_var)?,
        complement_state_var: inverse_gamma(cfg, "priors.complement_state_var", d.complement_state_var)?,
        alpha: normal(cfg, "priors.alpha", d.alpha)?,
        delta: normal(cfg, "priors.delta", d.delta)?,
        hyper: h,
    };
    p.validate()?;
    Ok(p)
}

/// `model.variant` (catalogue name or 1-based row), default the proposed model.
pub fn model_config(cfg: &Config) -> Result<ModelConfig> {
    let spec = match cfg.raw("model.variant") {
        Some(name) => VariantSpec::named(name)?,
        None => VariantSpec::proposed(),
    };
    Ok(build_variant(&spec))
}

/// `preprocess.*`.
pub fn preprocess_config(cfg: &Config) -> Result<PreprocessConfig> {
    let d = PreprocessConfig::default();
    Ok(PreprocessConfig { release_decay: cfg.get_or("preprocess.release_decay", d.release_decay)? })
}

/// `optimize.*`: GA settings plus the period granularity.
pub fn ga_config(cfg: &Config, seed: u64) -> Result<(GaConfig, Granularity)> {
    let d = GaConfig::default();
    let ga = GaConfig {
        population: cfg.get_or("optimize.population", d.population)?,
        generations: cfg.get_or("optimize.generations", d.generations)?,
        crossover_rate: cfg.get_or("optimize.crossover_rate", d.crossover_rate)?,
        mutation_rate: cfg.get_or("optimize.mutation_rate", d.mutation_rate)?,
        mutation_scale: cfg.get_or("optimize.mutation_scale", d.mutation_scale)?,
        elitism: cfg.get_or("optimize.elitism", d.elitism)?,
        tournament: cfg.get_or("optimize.tournament", d.tournament)?,
        seed,
        levels: cfg
            .get_list("optimize.levels")
            .map(|ls| {
                ls.iter()
                    .map(|l| l.parse().map_err(|_| Error::Config(format!("optimize.levels: bad level '{l}'"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .transpose()?,
    };
    ga.validate()?;
    let granularity = match cfg.raw("optimize.granularity").unwrap_or("monthly") {
        "daily" => Granularity::Daily,
        "monthly" => Granularity::monthly(),
        other => match other.strip_prefix("blocks:").and_then(|n| n.parse().ok()) {
            Some(n) if n > 0 => Granularity::Blocks(n),
            _ => {
                return Err(Error::Config(format!("optimize.granularity: '{other}' is not daily, monthly or blocks:N")))
            }
        },
    };
    Ok((ga, granularity))
}

/// `endogeneity.*`.
pub fn liv_config(cfg: &Config, seed: u64) -> Result<LivConfig> {
    let d = LivConfig::default();
    let model = match cfg.raw("endogeneity.model").unwrap_or("ar1") {
        "ar1" | "1" => LivModel::Ar1,
        "instrumented" | "2" => LivModel::Instrumented,
        other => return Err(Error::Config(format!("endogeneity.model: '{other}' is not ar1 or instrumented"))),
    };
    let mut priors = d.priors.clone();
    priors.coefficient = normal(cfg, "endogeneity.priors.coefficient", priors.coefficient)?;
    priors.gamma = normal(cfg, "endogeneity.priors.gamma", priors.gamma)?;
    priors.psi = inverse_gamma(cfg, "endogeneity.priors.psi", priors.psi)?;
    priors.obs_var = inverse_gamma(cfg, "endogeneity.priors.obs_var", priors.obs_var)?;
    priors.sigma_extra_df = cfg.get_or("endogeneity.priors.sigma_extra_df", priors.sigma_extra_df)?;
    priors.sigma_scale = cfg.get_or("endogeneity.priors.sigma_scale", priors.sigma_scale)?;
    Ok(LivConfig {
        model,
        iterations: cfg.get_or("endogeneity.iterations", d.iterations)?,
        burn_in: cfg.get("endogeneity.burn_in")?,
        thin: cfg.get_or("endogeneity.thin", d.thin)?,
        seed,
        priors,
    })
}

/// Parse every known section so that bad values and unknown keys surface
/// before any work starts, whichever subcommand reads the file.
pub fn validate_all(cfg: &Config, seed: u64) -> Result<()> {
    cfg.ignore_section("notes");
    simulation_config(cfg, seed)?;
    mcmc_config(cfg, seed)?;
    prior_config(cfg)?;
    model_config(cfg)?;
    preprocess_config(cfg)?;
    ga_config(cfg, seed)?;
    liv_config(cfg, seed)?;
    cfg.finish()
}
