//! Persisted MCMC output: a JSON header with provenance and chain statistics
//! (`archive.json`) and one JSON object per kept draw (`draws.jsonl`).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filter::FilterInit;
use crate::model::{ComplementParams, ModelConfig, PlatformParams, THETA_DIM};
use crate::sampler::{McmcConfig, PriorConfig};

pub const ARCHIVE_SCHEMA: &str = "jointdiff.archive/1";
pub const ARCHIVE_FILE: &str = "archive.json";
pub const DRAWS_FILE: &str = "draws.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub schema: String,
    pub seed: u64,
    /// SHA-256 of the serialized (mcmc, priors, model) configuration.
    pub config_hash: String,
    pub mcmc: McmcConfig,
    pub priors: PriorConfig,
    pub model: ModelConfig,
    pub platform_init: FilterInit,
    pub complement_ids: Vec<String>,
    pub complement_inits: Vec<FilterInit>,
    /// RNG substream id per block.
    pub substreams: BTreeMap<String, u64>,
    /// Whether the hierarchical layer was sampled (false when J <= K).
    pub hierarchical: bool,
}

/// Counters and acceptance rates accumulated after burn-in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainStats {
    /// MH acceptance rate per block, e.g. `platform.m0_kappa`, `c003.alpha`.
    pub acceptance: BTreeMap<String, f64>,
    /// Iterations in which a complement update was skipped.
    pub skipped: BTreeMap<String, usize>,
    pub ffbs_redraws: usize,
    pub ffbs_floored: usize,
    /// Platform proposals rejected because some `M_t <= 0`.
    pub potential_rejections: usize,
    pub nonfinite_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub iteration: usize,
    pub platform: PlatformParams,
    pub complements: Vec<ComplementParams>,
    pub eta: Vec<[f64; THETA_DIM]>,
    pub residual_var: [f64; THETA_DIM],
    /// Joint filter log-likelihood at this draw.
    pub loglik: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform_path: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement_paths: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawArchive {
    pub header: ArchiveHeader,
    pub stats: ChainStats,
    pub draws: Vec<DrawRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(mcmc: &McmcConfig, priors: &PriorConfig, model: &ModelConfig) -> String {
    let text = serde_json::to_string(&(mcmc, priors, model)).expect("config serializes");
    sha256_hex(text.as_bytes())
}

#[derive(Serialize, Deserialize)]
struct HeaderFile {
    header: ArchiveHeader,
    stats: ChainStats,
}

impl DrawArchive {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let head = dir.join(ARCHIVE_FILE);
        let text =
            serde_json::to_string_pretty(&HeaderFile { header: self.header.clone(), stats: self.stats.clone() })?;
        fs::write(&head, text + "\n").map_err(|e| Error::io(&head, e))?;
        let path = dir.join(DRAWS_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for d in &self.draws {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let head = dir.join(ARCHIVE_FILE);
        let path = dir.join(DRAWS_FILE);
        if !head.exists() || !path.exists() {
            return Err(Error::MissingArchive(dir.into()));
        }
        let text = fs::read_to_string(&head).map_err(|e| Error::io(&head, e))?;
        let hf: HeaderFile =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: head.clone(), message: e.to_string() })?;
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut draws = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            draws.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::Parse { path: path.clone(), message: format!("line {}: {e}", i + 1) })?,
            );
        }
        Ok(Self { header: hf.header, stats: hf.stats, draws })
    }

    /// Posterior mean of every parameter on its natural scale.
    pub fn posterior_mean(&self) -> Result<(PlatformParams, Vec<ComplementParams>)> {
        let n = self.draws.len();
        if n == 0 {
            return Err(Error::InsufficientDraws("empty archive".into()));
        }
        let first = &self.draws[0];
        let mut p = first.platform.clone();
        let avg = |f: &dyn Fn(&DrawRecord) -> f64| self.draws.iter().map(f).sum::<f64>() / n as f64;
        p.p0 = avg(&|d| d.platform.p0);
        p.q = avg(&|d| d.platform.q);
        p.m0 = avg(&|d| d.platform.m0);
        p.kappa = avg(&|d| d.platform.kappa);
        p.obs_var = avg(&|d| d.platform.obs_var);
        p.state_var = avg(&|d| d.platform.state_var);
        for i in 0..p.beta.len() {
            p.beta[i] = avg(&|d| d.platform.beta[i]);
        }
        for i in 0..p.rho.len() {
            p.rho[i] = avg(&|d| d.platform.rho[i]);
        }
        let mut cs = first.complements.clone();
        for (j, c) in cs.iter_mut().enumerate() {
            let mut theta = [0.0; THETA_DIM];
            for (k, t) in theta.iter_mut().enumerate() {
                *t = avg(&|d| d.complements[j].theta()[k]);
            }
            c.set_theta(&theta);
            for k in 0..3 {
                c.interaction[k] = avg(&|d| d.complements[j].interaction[k]);
            }
            c.obs_var = avg(&|d| d.complements[j].obs_var);
            c.state_var = avg(&|d| d.complements[j].state_var);
        }
        Ok((p, cs))
    }

    /// Named scalar traces: platform parameters, per-complement parameters,
    /// and cross-complement means of the complement parameter vector.
    pub fn traces(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        let Some(first) = self.draws.first() else {
            return out;
        };
        let col = |f: &dyn Fn(&DrawRecord) -> f64| self.draws.iter().map(f).collect::<Vec<f64>>();
        out.push(("M0".into(), col(&|d| d.platform.m0)));
        out.push(("kappa".into(), col(&|d| d.platform.kappa)));
        out.push(("p0".into(), col(&|d| d.platform.p0)));
        for i in 0..first.platform.beta.len() {
            out.push((format!("beta{}", i + 1), col(&|d| d.platform.beta[i])));
        }
        for i in 0..first.platform.rho.len() {
            out.push((format!("rho{}", i + 1), col(&|d| d.platform.rho[i])));
        }
        out.push(("q".into(), col(&|d| d.platform.q)));
        out.push(("V_p".into(), col(&|d| d.platform.obs_var)));
        out.push(("W_p".into(), col(&|d| d.platform.state_var)));
        let j = first.complements.len();
        if j > 0 {
            for (k, name) in crate::model::THETA_NAMES.iter().enumerate() {
                out.push((
                    format!("mean.{name}"),
                    col(&|d| d.complements.iter().map(|c| c.theta()[k]).sum::<f64>() / j as f64),
                ));
            }
            out.push(("mean.V_j".into(), col(&|d| d.complements.iter().map(|c| c.obs_var).sum::<f64>() / j as f64)));
            out.push(("mean.W_j".into(), col(&|d| d.complements.iter().map(|c| c.state_var).sum::<f64>() / j as f64)));
        }
        for (idx, id) in self.header.complement_ids.iter().enumerate() {
            for (k, name) in crate::model::THETA_NAMES.iter().enumerate() {
                out.push((format!("{id}.{name}"), col(&|d| d.complements[idx].theta()[k])));
            }
            out.push((format!("{id}.V"), col(&|d| d.complements[idx].obs_var)));
            out.push((format!("{id}.W"), col(&|d| d.complements[idx].state_var)));
        }
        out
    }
}
