//! EKF-within-MCMC Gibbs sampler.
//!
//! One iteration:
//!
//! 1. FFBS draw of the platform path `m_{1:T}` from the EKF at the current
//!    parameters.
//! 2. Platform drift block. Given the path, `m_t - m_{t-1}` is linear in
//!    `(p0, beta, rho, q)` for fixed `(M0, kappa)`; those coefficients are
//!    integrated out analytically and `(M0, kappa)` move by random-walk
//!    Metropolis on `(log M0, kappa)` against the collapsed likelihood,
//!    rejecting proposals with any `M_t <= 0`. The coefficients are then
//!    drawn from their Gaussian conditional.
//! 3. `V_p`, `W_p` from inverse-gamma conditionals.
//! 4. Per complement (in parallel, one RNG substream each): FFBS of `n_j`
//!    given `m`, collapsed random-walk Metropolis on logit(alpha_j) and
//!    logit(delta_j), Gaussian draw of the force coefficients, then `V_j`,
//!    `W_j`.
//! 5. Hierarchical layer (see [`crate::hierarchy`]).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{config_hash, ArchiveHeader, ChainStats, DrawArchive, DrawRecord, ARCHIVE_SCHEMA};
use crate::diagnostics::joint_loglik;
use crate::error::{Error, Result};
use crate::filter::{
    conditional_complement_pass, ekf_forward, ffbs_sample, ComplementTransition, FilterInit, FilterOptions,
    PlatformTransition,
};
use crate::hierarchy::{sample_hierarchy, HyperPrior, LOGIT_COORDS};
use crate::model::{
    complement_drift, market_potential, platform_drift, platform_external_force, ComplementFrame, ComplementParams,
    HierarchyDesign, ModelConfig, PlatformFrame, PlatformParams, POTENTIAL_FLOOR, THETA_DIM,
};
use crate::panel::ObservationPanel;
use crate::stats::{logistic, logit, logit_normal_logpdf, std_normal, InverseGamma, Normal, RegressionStats};

/// Consecutive non-finite iterations tolerated before the chain is abandoned.
pub const DIVERGENCE_LIMIT: usize = 10;

pub const PLATFORM_STREAM: u64 = 0;
pub const HIERARCHY_STREAM: u64 = 1;
/// Complement `j` uses substream `COMPLEMENT_STREAM_BASE + j`.
pub const COMPLEMENT_STREAM_BASE: u64 = 2;

/// Scale of the default inverse-gamma prior on every noise variance. With
/// shape 3 the prior mean is 5e-4, the order of the smallest published
/// variances, so a few hundred observations dominate it.
pub const DEFAULT_VARIANCE_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Prior of every regression coefficient without a more specific entry.
    pub coefficient: Normal,
    /// Prior of M0, truncated to M0 > 0.
    pub m0: Normal,
    pub kappa: Normal,
    /// Prior of the interaction-variant coefficients.
    pub interaction: Normal,
    pub platform_obs_var: InverseGamma,
    pub platform_state_var: InverseGamma,
    pub complement_obs_var: InverseGamma,
    pub complement_state_var: InverseGamma,
    /// Logit-normal priors (mean and variance on the logit scale), used when
    /// the hierarchy cannot be identified.
    pub alpha: Normal,
    pub delta: Normal,
    pub hyper: HyperPrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let coef = Normal::new(0.0, 100.0);
        let var = InverseGamma::new(3.0, DEFAULT_VARIANCE_SCALE);
        Self {
            coefficient: coef,
            m0: coef,
            kappa: coef,
            interaction: coef,
            platform_obs_var: var,
            platform_state_var: var,
            complement_obs_var: var,
            complement_state_var: var,
            alpha: Normal::new(-4.0, 4.0),
            delta: Normal::new(-4.0, 4.0),
            hyper: HyperPrior::default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("coefficient", self.coefficient),
            ("m0", self.m0),
            ("kappa", self.kappa),
            ("interaction", self.interaction),
            ("alpha", self.alpha),
            ("delta", self.delta),
        ] {
            if !(n.var > 0.0) {
                return Err(Error::PriorMisconfiguration(format!("{name} prior variance must be > 0")));
            }
        }
        for (name, ig) in [
            ("platform_obs_var", self.platform_obs_var),
            ("platform_state_var", self.platform_state_var),
            ("complement_obs_var", self.complement_obs_var),
            ("complement_state_var", self.complement_state_var),
        ] {
            if !(ig.shape > 1.0 && ig.scale > 0.0) {
                return Err(Error::PriorMisconfiguration(format!("{name} needs IG shape > 1 and scale > 0")));
            }
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    /// Defaults to a quarter of the iterations.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    /// Store latent paths on every `path_every`-th kept draw (0 = never).
    pub path_every: usize,
    /// Batch length for step-size adaptation during burn-in.
    pub adapt_every: usize,
    pub target_accept: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { iterations: 4000, burn_in: None, thin: 5, seed: 0, path_every: 10, adapt_every: 50, target_accept: 0.3 }
    }
}

impl McmcConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in() {
            return Err(Error::InvalidParameter(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations,
                self.burn_in()
            )));
        }
        if self.thin == 0 || self.adapt_every == 0 {
            return Err(Error::InvalidParameter("thin and adapt_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Random-walk Metropolis step on the logit scale for a value in (0,1).
/// `log_target` is the log density on the natural scale; the proposal's
/// change of variables contributes `log x(1-x)`.
pub fn sample_constrained_logit<R, F>(current: f64, log_target: F, step: f64, rng: &mut R) -> (f64, bool)
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    let proposal = logistic(logit(current) + step * std_normal(rng));
    if !(proposal > 0.0 && proposal < 1.0) {
        return (current, false);
    }
    let log_jac = |x: f64| (x * (1.0 - x)).ln();
    let cur = log_target(current) + log_jac(current);
    let new = log_target(proposal) + log_jac(proposal);
    let log_u = rng.random::<f64>().ln();
    if new.is_finite() && (log_u < new - cur || !cur.is_finite()) {
        (proposal, true)
    } else {
        (current, false)
    }
}

#[derive(Debug, Clone, Default)]
struct Acceptance {
    batch_tries: usize,
    batch_accepts: usize,
    tries: usize,
    accepts: usize,
}

impl Acceptance {
    fn record(&mut self, accepted: bool, counting: bool) {
        self.batch_tries += 1;
        self.batch_accepts += accepted as usize;
        if counting {
            self.tries += 1;
            self.accepts += accepted as usize;
        }
    }

    /// Adjust `step` toward the target rate and reset the batch.
    fn adapt(&mut self, step: &mut f64, target: f64) {
        if self.batch_tries > 0 {
            let rate = self.batch_accepts as f64 / self.batch_tries as f64;
            *step *= (2.0 * (rate - target)).exp();
            *step = step.clamp(1e-6, 50.0);
        }
        self.batch_tries = 0;
        self.batch_accepts = 0;
    }

    fn rate(&self) -> f64 {
        if self.tries == 0 {
            0.0
        } else {
            self.accepts as f64 / self.tries as f64
        }
    }
}

/// Random-walk Metropolis on `log v` for a noise variance, against the
/// filter log-likelihood with the states integrated out. `loglik` returns
/// `None` when the filter fails at the proposed value.
fn refresh_variance<R, F>(
    current: f64,
    current_ll: f64,
    prior: InverseGamma,
    step: f64,
    loglik: F,
    rng: &mut R,
) -> (f64, f64, bool)
where
    R: Rng + ?Sized,
    F: Fn(f64) -> Option<f64>,
{
    let proposal = current * (step * std_normal(rng)).exp();
    let Some(ll) = loglik(proposal).filter(|l| l.is_finite()) else {
        return (current, current_ll, false);
    };
    let target = |v: f64, ll: f64| ll + prior.log_kernel(v) + v.ln();
    let log_u = rng.random::<f64>().ln();
    if log_u < target(proposal, ll) - target(current, current_ll) || !current_ll.is_finite() {
        (proposal, ll, true)
    } else {
        (current, current_ll, false)
    }
}

/// Step sizes and acceptance counters of the two noise-variance refreshes.
#[derive(Debug, Clone)]
struct NoiseMoves {
    step_obs: f64,
    step_state: f64,
    acc_obs: Acceptance,
    acc_state: Acceptance,
}

impl Default for NoiseMoves {
    fn default() -> Self {
        Self { step_obs: 0.3, step_state: 0.3, acc_obs: Acceptance::default(), acc_state: Acceptance::default() }
    }
}

impl NoiseMoves {
    /// Refresh `(V, W)` one at a time; `loglik(v, w)` is the filter likelihood.
    fn run<R, F>(
        &mut self,
        vw: (f64, f64),
        priors: (InverseGamma, InverseGamma),
        loglik: F,
        counting: bool,
        rng: &mut R,
    ) -> (f64, f64)
    where
        R: Rng + ?Sized,
        F: Fn(f64, f64) -> Option<f64>,
    {
        let (mut v, mut w) = vw;
        let ll = loglik(v, w).unwrap_or(f64::NEG_INFINITY);
        let (nv, ll, ok) = refresh_variance(v, ll, priors.0, self.step_obs, |x| loglik(x, w), rng);
        self.acc_obs.record(ok, counting);
        v = nv;
        let (nw, _, ok) = refresh_variance(w, ll, priors.1, self.step_state, |x| loglik(v, x), rng);
        self.acc_state.record(ok, counting);
        w = nw;
        (v, w)
    }

    fn adapt(&mut self, target: f64) {
        self.acc_obs.adapt(&mut self.step_obs, target);
        self.acc_state.adapt(&mut self.step_state, target);
    }
}

// ---------------------------------------------------------------------------
// platform block

/// Which platform coefficients are free, in regression column order.
#[derive(Debug, Clone, Copy)]
struct PlatformLayout {
    nx: usize,
    nz: usize,
    governance: bool,
}

impl PlatformLayout {
    fn dim(&self) -> usize {
        1 + self.nx + if self.governance { self.nz } else { 0 } + 1
    }

    fn unpack(&self, coef: &[f64], params: &mut PlatformParams) {
        params.p0 = coef[0];
        params.beta.copy_from_slice(&coef[1..1 + self.nx]);
        let mut at = 1 + self.nx;
        if self.governance {
            params.rho.copy_from_slice(&coef[at..at + self.nz]);
            at += self.nz;
        } else {
            params.rho.iter_mut().for_each(|r| *r = 0.0);
        }
        params.q = coef[at];
    }
}

/// Regression of the path increments on the force terms at fixed `(M0, kappa)`.
fn platform_regression(
    path: &[f64],
    frames: &[PlatformFrame],
    m0: f64,
    kappa: f64,
    layout: PlatformLayout,
) -> Result<RegressionStats> {
    let mut st = RegressionStats::new(layout.dim());
    let mut x = vec![0.0; layout.dim()];
    for i in 1..path.len() {
        let f = &frames[i];
        let pot = market_potential(m0, kappa, f.addons)
            .map_err(|_| Error::NonPositivePotential { day: i + 1, value: m0 + kappa * f.addons })?;
        let prev = path[i - 1];
        let gap = pot - prev;
        x[0] = gap;
        for (k, v) in f.x.iter().enumerate() {
            x[1 + k] = gap * v;
        }
        let mut at = 1 + layout.nx;
        if layout.governance {
            for (k, v) in f.z.iter().enumerate() {
                x[at + k] = gap * v;
            }
            at += layout.nz;
        }
        x[at] = prev * gap / pot;
        st.push(&x, path[i] - prev);
    }
    Ok(st)
}

fn platform_state_ss(path: &[f64], frames: &[PlatformFrame], p: &PlatformParams) -> Result<f64> {
    let mut ss = 0.0;
    for i in 1..path.len() {
        let force = platform_external_force(p, &frames[i])?;
        let pot = market_potential(p.m0, p.kappa, frames[i].addons)?;
        let r = path[i] - path[i - 1] - platform_drift(path[i - 1], force, p.q, pot)?;
        ss += r * r;
    }
    Ok(ss)
}

fn obs_ss(path: &[f64], obs: &[Option<f64>]) -> (usize, f64) {
    obs.iter().zip(path).filter_map(|(y, m)| y.map(|y| (y - m) * (y - m))).fold((0, 0.0), |(n, s), r| (n + 1, s + r))
}

struct PlatformState {
    params: PlatformParams,
    path: Vec<f64>,
    init: FilterInit,
    layout: PlatformLayout,
    step_log_m0: f64,
    step_kappa: f64,
    acc: Acceptance,
    noise: NoiseMoves,
    rng: ChaCha8Rng,
}

impl PlatformState {
    fn coefficient_prior(&self, priors: &PriorConfig) -> Vec<Normal> {
        vec![priors.coefficient; self.layout.dim()]
    }

    /// Collapsed log target of `(log M0, kappa)`, including the log-M0 Jacobian.
    fn log_target(&self, frames: &[PlatformFrame], m0: f64, kappa: f64, priors: &PriorConfig) -> Result<f64> {
        let st = platform_regression(&self.path, frames, m0, kappa, self.layout)?;
        let post = st.posterior(&self.coefficient_prior(priors), self.params.state_var)?;
        Ok(post.log_marginal + priors.m0.logpdf(m0) + priors.kappa.logpdf(kappa) + m0.ln())
    }

    fn update_drift(
        &mut self,
        frames: &[PlatformFrame],
        priors: &PriorConfig,
        model: &ModelConfig,
        counting: bool,
        stats: &mut ChainStats,
    ) -> Result<()> {
        let (m0, kappa) = (self.params.m0, self.params.kappa);
        let current = self.log_target(frames, m0, kappa, priors)?;
        let m0_new = (m0.ln() + self.step_log_m0 * std_normal(&mut self.rng)).exp();
        let kappa_new = if model.no_addon_effect { 0.0 } else { kappa + self.step_kappa * std_normal(&mut self.rng) };
        let log_u = self.rng.random::<f64>().ln();
        let accepted = match self.log_target(frames, m0_new, kappa_new, priors) {
            Ok(proposed) => proposed.is_finite() && log_u < proposed - current,
            Err(Error::NonPositivePotential { .. }) => {
                if counting {
                    stats.potential_rejections += 1;
                }
                false
            }
            Err(e) => return Err(e),
        };
        self.acc.record(accepted, counting);
        if accepted {
            self.params.m0 = m0_new;
            self.params.kappa = kappa_new;
        }
        let st = platform_regression(&self.path, frames, self.params.m0, self.params.kappa, self.layout)?;
        let coef = st.posterior(&self.coefficient_prior(priors), self.params.state_var)?.sample(&mut self.rng);
        self.layout.unpack(coef.as_slice(), &mut self.params);
        Ok(())
    }

    /// Collapsed refresh of `(V_p, W_p)` ahead of the path draw.
    fn refresh_noise(
        &mut self,
        frames: &[PlatformFrame],
        obs: &[Option<f64>],
        priors: &PriorConfig,
        options: &FilterOptions,
        counting: bool,
    ) {
        let params = &self.params;
        let init = self.init;
        let loglik = |v: f64, w: f64| {
            let mut p = params.clone();
            p.obs_var = v;
            p.state_var = w;
            let t = PlatformTransition::new(&p, frames).ok()?;
            ekf_forward(&t, obs, init, options).ok().map(|o| o.loglik)
        };
        let (v, w) = self.noise.run(
            (params.obs_var, params.state_var),
            (priors.platform_obs_var, priors.platform_state_var),
            loglik,
            counting,
            &mut self.rng,
        );
        self.params.obs_var = v;
        self.params.state_var = w;
    }

    fn update_variances(&mut self, frames: &[PlatformFrame], obs: &[Option<f64>], priors: &PriorConfig) -> Result<()> {
        let ss = platform_state_ss(&self.path, frames, &self.params)?;
        self.params.state_var = priors.platform_state_var.posterior_draw(self.path.len() - 1, ss, &mut self.rng);
        let (n, ss) = obs_ss(&self.path, obs);
        self.params.obs_var = priors.platform_obs_var.posterior_draw(n, ss, &mut self.rng);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// complement block

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coef {
    Theta(usize),
    Interaction(usize),
}

fn complement_columns(model: &ModelConfig) -> Vec<Coef> {
    let active = model.theta_active();
    let mut cols: Vec<Coef> = (2..THETA_DIM).filter(|&k| active[k]).map(Coef::Theta).collect();
    if model.interactions {
        cols.extend((0..3).map(Coef::Interaction));
    }
    cols
}

/// Regression of `n_t - n_{t-1} + delta·n_{t-1}` on the force terms at fixed
/// `(alpha, delta)`.
fn complement_regression(
    n: &[f64],
    m_prev: &[f64],
    frames: &[ComplementFrame],
    alpha: f64,
    delta: f64,
    cols: &[Coef],
) -> Result<RegressionStats> {
    let mut st = RegressionStats::new(cols.len());
    let mut x = vec![0.0; cols.len()];
    for i in 1..n.len() {
        let pot = alpha * m_prev[i];
        if !(pot > POTENTIAL_FLOOR) {
            return Err(Error::DegeneratePotential { value: pot });
        }
        let prev = n[i - 1];
        let gap = pot - prev;
        let w = (1.0 - delta) * prev * gap / pot;
        let f = &frames[i];
        for (c, col) in cols.iter().enumerate() {
            x[c] = match *col {
                Coef::Theta(2) => gap,
                Coef::Theta(3) => gap * f.pv,
                Coef::Theta(4) => gap * f.av,
                Coef::Theta(5) => w,
                Coef::Theta(6) => w * f.rtv,
                Coef::Theta(7) => w * f.ol,
                Coef::Theta(8) => w * f.stavg,
                Coef::Interaction(0) => gap * f.pv * f.av,
                Coef::Interaction(1) => w * f.rtv * f.ol,
                Coef::Interaction(2) => w * f.rtv * f.stavg,
                _ => unreachable!("alpha and delta are not regression columns"),
            };
        }
        st.push(&x, n[i] - prev + delta * prev);
    }
    Ok(st)
}

/// Per-coordinate prior of one complement's parameter vector on the `phi`
/// scale (logit for alpha and delta).
#[derive(Debug, Clone)]
struct ComplementPrior {
    phi: [Normal; THETA_DIM],
    interaction: Normal,
}

impl ComplementPrior {
    fn base(priors: &PriorConfig) -> Self {
        let mut phi = [priors.coefficient; THETA_DIM];
        phi[0] = priors.alpha;
        phi[1] = priors.delta;
        Self { phi, interaction: priors.interaction }
    }

    fn from_hierarchy(h: &HierarchyDesign, j: usize, priors: &PriorConfig) -> Result<Self> {
        let mean = h.mean_theta(j)?;
        let mut out = Self::base(priors);
        for k in 0..THETA_DIM {
            if h.residual_var[k] > 0.0 {
                out.phi[k] = Normal::new(mean[k], h.residual_var[k]);
            }
        }
        Ok(out)
    }

    fn coefficient_priors(&self, cols: &[Coef]) -> Vec<Normal> {
        cols.iter()
            .map(|c| match *c {
                Coef::Theta(k) => self.phi[k],
                Coef::Interaction(_) => self.interaction,
            })
            .collect()
    }
}

struct ComplementState {
    id: String,
    launch: usize,
    params: ComplementParams,
    path: Vec<f64>,
    init: FilterInit,
    step_alpha: f64,
    step_delta: f64,
    acc_alpha: Acceptance,
    acc_delta: Acceptance,
    noise: NoiseMoves,
    skipped: usize,
    redraws: usize,
    floored: usize,
    loglik: f64,
    rng: ChaCha8Rng,
}

#[allow(clippy::too_many_arguments)]
fn collapsed_complement(
    path: &[f64],
    state_var: f64,
    m_prev: &[f64],
    frames: &[ComplementFrame],
    alpha: f64,
    delta: f64,
    cols: &[Coef],
    prior: &ComplementPrior,
) -> Result<f64> {
    let st = complement_regression(path, m_prev, frames, alpha, delta, cols)?;
    Ok(st.posterior(&prior.coefficient_priors(cols), state_var)?.log_marginal)
}

struct ComplementData<'a> {
    obs: &'a [Option<f64>],
    frames: &'a [ComplementFrame],
}

impl ComplementState {
    fn m_prev(&self, platform_path: &[f64]) -> Vec<f64> {
        (0..self.path.len())
            .map(|i| {
                let day = self.launch + i;
                if day >= 2 {
                    platform_path[day - 2]
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn update(
        &mut self,
        data: &ComplementData,
        platform_path: &[f64],
        prior: &ComplementPrior,
        cols: &[Coef],
        model: &ModelConfig,
        priors: &PriorConfig,
        options: &FilterOptions,
        counting: bool,
    ) -> Result<()> {
        let (params, init, launch) = (&self.params, self.init, self.launch);
        let loglik = |v: f64, w: f64| {
            let mut p = params.clone();
            p.obs_var = v;
            p.state_var = w;
            let t = ComplementTransition::new(&p, data.frames, launch, platform_path).ok()?;
            ekf_forward(&t, data.obs, init, options).ok().map(|o| o.loglik)
        };
        let (v, w) = self.noise.run(
            (params.obs_var, params.state_var),
            (priors.complement_obs_var, priors.complement_state_var),
            loglik,
            counting,
            &mut self.rng,
        );
        self.params.obs_var = v;
        self.params.state_var = w;

        let (sampled, out) = conditional_complement_pass(
            data.obs,
            &self.params,
            data.frames,
            self.launch,
            platform_path,
            self.init,
            options,
            &mut self.rng,
        )?;
        self.loglik = out.loglik;
        if counting {
            self.redraws += sampled.redraws;
            self.floored += sampled.floored;
        }
        self.path = sampled.path;
        let m_prev = self.m_prev(platform_path);

        let delta = self.params.delta;
        let (path, w) = (&self.path, self.params.state_var);
        let target_alpha = |a: f64| {
            collapsed_complement(path, w, &m_prev, data.frames, a, delta, cols, prior).unwrap_or(f64::NEG_INFINITY)
                + logit_normal_logpdf(a, prior.phi[0].mean, prior.phi[0].var)
        };
        let (alpha, ok) = sample_constrained_logit(self.params.alpha, target_alpha, self.step_alpha, &mut self.rng);
        self.acc_alpha.record(ok, counting);
        self.params.alpha = alpha;

        if !model.no_churn {
            let target_delta = |d: f64| {
                collapsed_complement(path, w, &m_prev, data.frames, alpha, d, cols, prior).unwrap_or(f64::NEG_INFINITY)
                    + logit_normal_logpdf(d, prior.phi[1].mean, prior.phi[1].var)
            };
            let (delta, ok) = sample_constrained_logit(self.params.delta, target_delta, self.step_delta, &mut self.rng);
            self.acc_delta.record(ok, counting);
            self.params.delta = delta;
        }

        let st = complement_regression(&self.path, &m_prev, data.frames, self.params.alpha, self.params.delta, cols)?;
        let coef = st.posterior(&prior.coefficient_priors(cols), self.params.state_var)?.sample(&mut self.rng);
        let mut theta = self.params.theta();
        for (c, col) in cols.iter().enumerate() {
            match *col {
                Coef::Theta(k) => theta[k] = coef[c],
                Coef::Interaction(k) => self.params.interaction[k] = coef[c],
            }
        }
        self.params.set_theta(&theta);

        let mut ss = 0.0;
        for i in 1..self.path.len() {
            let (p, q) = crate::model::complement_forces(&self.params, &data.frames[i]);
            let mean = self.path[i - 1]
                + complement_drift(self.path[i - 1], m_prev[i], p, q, self.params.alpha, self.params.delta)?;
            ss += (self.path[i] - mean).powi(2);
        }
        self.params.state_var = priors.complement_state_var.posterior_draw(self.path.len() - 1, ss, &mut self.rng);
        let (n, ss) = obs_ss(&self.path, data.obs);
        self.params.obs_var = priors.complement_obs_var.posterior_draw(n, ss, &mut self.rng);
        Ok(())
    }
}

fn phi_of(c: &ComplementParams, model: &ModelConfig) -> [f64; THETA_DIM] {
    let mut phi = c.theta();
    phi[0] = logit(phi[0]);
    phi[1] = if model.no_churn { 0.0 } else { logit(phi[1]) };
    phi
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn initial_variance(obs: &[Option<f64>]) -> f64 {
    let ys: Vec<f64> = obs.iter().flatten().copied().collect();
    let diffs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    (0.5 * crate::stats::sample_var(&diffs)).max(1e-8)
}

/// Run one chain and return its archive.
pub fn run_chain(
    panel: &ObservationPanel,
    priors: &PriorConfig,
    mcmc: &McmcConfig,
    model: &ModelConfig,
) -> Result<DrawArchive> {
    panel.validate()?;
    priors.validate()?;
    mcmc.validate()?;
    let options = FilterOptions::default();
    let frames = &panel.platform.frames;
    let obs = &panel.platform.observations;
    let (nx, nz) = (panel.n_competitors(), panel.n_governance());

    let platform_init = FilterInit::diffuse(obs)?;
    let max_y = obs.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let var0 = initial_variance(obs);
    let mut platform = PlatformState {
        params: PlatformParams {
            p0: 0.0,
            beta: vec![0.0; nx],
            rho: vec![0.0; nz],
            q: 0.0,
            m0: 1.2 * max_y.abs().max(1e-6),
            kappa: 0.0,
            obs_var: var0,
            state_var: var0,
        },
        path: Vec::new(),
        init: platform_init,
        layout: PlatformLayout { nx, nz, governance: !model.no_governance },
        step_log_m0: 0.5,
        step_kappa: 0.1 * max_y.abs().max(1e-6),
        acc: Acceptance::default(),
        noise: NoiseMoves::default(),
        rng: stream(mcmc.seed, PLATFORM_STREAM),
    };

    let mut complements = Vec::with_capacity(panel.complements.len());
    for (j, c) in panel.complements.iter().enumerate() {
        if c.observations.iter().flatten().count() < 2 || c.len() < 3 {
            return Err(Error::EmptySeries(format!("complement '{}' needs at least 3 days and 2 observations", c.id)));
        }
        let window_mean = {
            let ys: Vec<f64> = obs[c.launch - 1..c.end].iter().flatten().copied().collect();
            if ys.is_empty() {
                max_y
            } else {
                ys.iter().sum::<f64>() / ys.len() as f64
            }
        };
        let max_n = c.observations.iter().flatten().cloned().fold(0.0, f64::max);
        let alpha = (1.5 * max_n / window_mean.abs().max(1e-12)).clamp(1e-3, 0.5);
        let v = initial_variance(&c.observations);
        complements.push(ComplementState {
            id: c.id.clone(),
            launch: c.launch,
            params: ComplementParams {
                alpha,
                delta: if model.no_churn { 0.0 } else { 0.02 },
                p0: 0.0,
                p1: 0.0,
                p2: 0.0,
                q0: 0.0,
                q1: 0.0,
                q2: 0.0,
                q3: 0.0,
                interaction: [0.0; 3],
                obs_var: v,
                state_var: v,
            },
            path: Vec::new(),
            init: FilterInit::diffuse(&c.observations)?,
            step_alpha: 0.3,
            step_delta: 0.3,
            acc_alpha: Acceptance::default(),
            acc_delta: Acceptance::default(),
            noise: NoiseMoves::default(),
            skipped: 0,
            redraws: 0,
            floored: 0,
            loglik: 0.0,
            rng: stream(mcmc.seed, COMPLEMENT_STREAM_BASE + j as u64),
        });
    }
    let data: Vec<ComplementData> =
        panel.complements.iter().map(|c| ComplementData { obs: &c.observations, frames: &c.frames }).collect();

    // hierarchy design: intercept plus dummies
    let design: Vec<Vec<f64>> =
        panel.complements.iter().map(|c| std::iter::once(1.0).chain(c.dummies.iter().copied()).collect()).collect();
    let k = design.first().map_or(1, Vec::len);
    let hierarchical = panel.complements.len() > k;
    let active = model.theta_active();
    let mut hier_rng = stream(mcmc.seed, HIERARCHY_STREAM);
    let mut hierarchy: Option<HierarchyDesign> = None;
    let cols = complement_columns(model);

    let burn_in = mcmc.burn_in();
    let mut stats = ChainStats::default();
    let mut draws = Vec::new();
    let mut nonfinite_run = 0usize;
    let mut kept = 0usize;

    for it in 0..mcmc.iterations {
        let counting = it >= burn_in;

        // 1. platform path, after a collapsed refresh of its noise variances
        platform.refresh_noise(frames, obs, priors, &options, counting);
        let mut iteration_ll = f64::NAN;
        let pass = PlatformTransition::new(&platform.params, frames)
            .and_then(|t| ekf_forward(&t, obs, platform.init, &options));
        match pass {
            Ok(out) => {
                let sampled = ffbs_sample(&out, true, &mut platform.rng)?;
                if counting {
                    stats.ffbs_redraws += sampled.redraws;
                    stats.ffbs_floored += sampled.floored;
                }
                platform.path = sampled.path;
                iteration_ll = out.loglik;
            }
            Err(Error::NumericalBlowup { .. }) | Err(Error::NonPositivePotential { .. })
                if !platform.path.is_empty() => {}
            Err(e) => return Err(e),
        }

        // 2-3. platform parameters
        platform.update_drift(frames, priors, model, counting, &mut stats)?;
        platform.update_variances(frames, obs, priors)?;

        // 4. complements
        let priors_j: Vec<ComplementPrior> = (0..complements.len())
            .map(|j| match &hierarchy {
                Some(h) => ComplementPrior::from_hierarchy(h, j, priors),
                None => Ok(ComplementPrior::base(priors)),
            })
            .collect::<Result<_>>()?;
        let platform_path = &platform.path;
        let results: Vec<Result<()>> = complements
            .par_iter_mut()
            .zip(data.par_iter())
            .zip(priors_j.par_iter())
            .map(|((state, d), prior)| {
                let snapshot = (state.params.clone(), state.path.clone());
                match state.update(d, platform_path, prior, &cols, model, priors, &options, counting) {
                    Ok(()) => Ok(()),
                    Err(Error::DegeneratePotential { .. }) | Err(Error::NumericalBlowup { .. }) => {
                        state.params = snapshot.0;
                        state.path = snapshot.1;
                        state.loglik = f64::NAN;
                        if counting {
                            state.skipped += 1;
                        }
                        Ok(())
                    }
                    Err(e) => Err(e),
                }
            })
            .collect();
        for r in results {
            r?;
        }
        let complement_ll: f64 = complements.iter().map(|c| c.loglik).filter(|l| l.is_finite()).sum();
        iteration_ll += complement_ll;

        // 5. hierarchy
        if hierarchical {
            let phi: Vec<[f64; THETA_DIM]> = complements.iter().map(|c| phi_of(&c.params, model)).collect();
            hierarchy = Some(sample_hierarchy(&phi, &design, &priors.hyper, &model.explained, &active, &mut hier_rng)?);
        }

        if iteration_ll.is_finite() {
            nonfinite_run = 0;
        } else {
            nonfinite_run += 1;
            if counting {
                stats.nonfinite_iterations += 1;
            }
            if nonfinite_run >= DIVERGENCE_LIMIT {
                return Err(Error::ChainDiverged { iteration: it });
            }
        }

        if !counting && (it + 1) % mcmc.adapt_every == 0 {
            platform.acc.adapt(&mut platform.step_log_m0, mcmc.target_accept);
            platform.noise.adapt(mcmc.target_accept);
            for c in complements.iter_mut() {
                c.acc_alpha.adapt(&mut c.step_alpha, mcmc.target_accept);
                c.acc_delta.adapt(&mut c.step_delta, mcmc.target_accept);
                c.noise.adapt(mcmc.target_accept);
            }
        }

        if counting && (it - burn_in).is_multiple_of(mcmc.thin) {
            let cparams: Vec<ComplementParams> = complements.iter().map(|c| c.params.clone()).collect();
            let inits: Vec<FilterInit> = complements.iter().map(|c| c.init).collect();
            let loglik =
                joint_loglik(panel, &platform.params, &cparams, platform.init, &inits, &options).unwrap_or(f64::NAN);
            let with_paths = mcmc.path_every > 0 && kept.is_multiple_of(mcmc.path_every);
            let (eta, residual_var) = match &hierarchy {
                Some(h) => (h.eta.clone(), h.residual_var),
                None => (Vec::new(), [0.0; THETA_DIM]),
            };
            draws.push(DrawRecord {
                iteration: it,
                platform: platform.params.clone(),
                complements: cparams,
                eta,
                residual_var,
                loglik,
                platform_path: with_paths.then(|| platform.path.clone()),
                complement_paths: with_paths.then(|| complements.iter().map(|c| c.path.clone()).collect()),
            });
            kept += 1;
        }
    }

    stats.acceptance.insert("platform.m0_kappa".into(), platform.acc.rate());
    stats.acceptance.insert("platform.obs_var".into(), platform.noise.acc_obs.rate());
    stats.acceptance.insert("platform.state_var".into(), platform.noise.acc_state.rate());
    for c in &complements {
        stats.acceptance.insert(format!("{}.alpha", c.id), c.acc_alpha.rate());
        stats.acceptance.insert(format!("{}.obs_var", c.id), c.noise.acc_obs.rate());
        stats.acceptance.insert(format!("{}.state_var", c.id), c.noise.acc_state.rate());
        if !model.no_churn {
            stats.acceptance.insert(format!("{}.delta", c.id), c.acc_delta.rate());
        }
        stats.skipped.insert(c.id.clone(), c.skipped);
        stats.ffbs_redraws += c.redraws;
        stats.ffbs_floored += c.floored;
    }
    let mut substreams = BTreeMap::new();
    substreams.insert("platform".to_string(), PLATFORM_STREAM);
    substreams.insert("hierarchy".to_string(), HIERARCHY_STREAM);
    for (j, c) in complements.iter().enumerate() {
        substreams.insert(c.id.clone(), COMPLEMENT_STREAM_BASE + j as u64);
    }
    Ok(DrawArchive {
        header: ArchiveHeader {
            schema: ARCHIVE_SCHEMA.into(),
            seed: mcmc.seed,
            config_hash: config_hash(mcmc, priors, model),
            mcmc: mcmc.clone(),
            priors: priors.clone(),
            model: model.clone(),
            platform_init: platform.init,
            complement_ids: complements.iter().map(|c| c.id.clone()).collect(),
            complement_inits: complements.iter().map(|c| c.init).collect(),
            substreams,
            hierarchical,
        },
        stats,
        draws,
    })
}

/// Indices into `phi` that live on the logit scale.
pub fn is_logit_coord(k: usize) -> bool {
    k < LOGIT_COORDS
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, sample_var};

    #[test]
    fn zero_step_keeps_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, ok) = sample_constrained_logit(0.3, |_| 0.0, 0.0, &mut rng);
        assert_eq!(x, 0.3);
        assert!(ok);
    }

    #[test]
    fn beta_target_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = |x: f64| (x).ln() + 4.0 * (1.0 - x).ln();
        let mut x = 0.5;
        let n = 50_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            x = sample_constrained_logit(x, target, 1.0, &mut rng).0;
            assert!(x > 0.0 && x < 1.0);
            draws.push(x);
        }
        // batch means for the Monte-Carlo standard error
        let batches: Vec<f64> = draws.chunks(1000).map(mean).collect();
        let se = (sample_var(&batches) / batches.len() as f64).sqrt();
        assert!((mean(&draws) - 2.0 / 7.0).abs() < 3.0 * se.max(1e-4), "{} vs {}", mean(&draws), 2.0 / 7.0);
    }

    #[test]
    fn flat_target_acceptance_matches_long_run_rate() {
        // With a flat target on (0,1) the acceptance probability of a logit
        // random walk is min(1, x'(1-x')/(x(1-x))); compare the empirical rate
        // with a Monte-Carlo estimate of its expectation under the target.
        let step = 1.5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = 0.5;
        let n = 100_000;
        let mut accepted = 0;
        for _ in 0..n {
            let (nx, ok) = sample_constrained_logit(x, |_| 0.0, step, &mut rng);
            x = nx;
            accepted += ok as usize;
        }
        let empirical = accepted as f64 / n as f64;
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(4);
        let mut total = 0.0;
        for _ in 0..n {
            let u: f64 = oracle_rng.random::<f64>();
            let y = logistic(logit(u) + step * std_normal(&mut oracle_rng));
            total += ((y * (1.0 - y)) / (u * (1.0 - u))).min(1.0);
        }
        let expected = total / n as f64;
        assert!((empirical - expected).abs() < 0.01, "{empirical} vs {expected}");
    }

    #[test]
    fn default_priors_validate() {
        PriorConfig::default().validate().unwrap();
        let mut bad = PriorConfig::default();
        bad.platform_obs_var.shape = 1.0;
        assert!(matches!(bad.validate(), Err(Error::PriorMisconfiguration(_))));
    }
}
