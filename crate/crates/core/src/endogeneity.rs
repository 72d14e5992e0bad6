//! Latent-instrumental-variable test for endogenous covariates.
//!
//! A suspect covariate `Z^k_t` is treated as a noisy measurement of a latent
//! AR(1) process `mu_k`; the measurement errors `theta_k` and the state error
//! `w` of the diffusion equation are jointly normal with covariance `Sigma`
//! (ordering `(theta_1, .., theta_K, w)`). A nonzero `Corr(w, theta_k)` means
//! the observed covariate is correlated with the diffusion shock.
//!
//! The diffusion state follows
//!
//! ```text
//! x_t = x_{t-1} + (p0 + sum_k b_k mu_{k,t} + p2 Z2_t + q(1-delta) x_{t-1}/P_t)(P_t - x_{t-1})
//!       - delta x_{t-1} + w_t
//! ```
//!
//! with the potential `P_t` a fixed plug-in (`M0 + kappa A_t` for the
//! platform, `alpha m_{t-1}` for a complement). Each sweep alternates an
//! EKF/FFBS draw of `x` given `mu` (with `w | theta` shifting the mean), the
//! drift coefficients, a multivariate FFBS draw of `mu` given `x`, the AR
//! coefficients (stationarity enforced by rejection), `Psi`, `V` and an
//! inverse-Wishart draw of `Sigma`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{ekf_forward, ffbs_sample, FilterInit, FilterOptions, Transition};
use crate::model::ComplementParams;
use crate::panel::{ObservationPanel, EFFORT_COLUMN};
use crate::stats::{
    mean, sample_inverse_wishart, sample_var, std_normal, InverseGamma, Normal, PosteriorSummary, RegressionStats,
};

/// Redraws of the AR coefficients before a nonstationary draw is rejected.
pub const MAX_STATIONARITY_TRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LivModel {
    /// `mu_t = g1 + g2 mu_{t-1} + zeta_t`.
    Ar1,
    /// Adds `g3 Z2_t` to the latent equation; needs an instrument.
    Instrumented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivPriors {
    pub coefficient: Normal,
    pub gamma: Normal,
    pub psi: InverseGamma,
    pub obs_var: InverseGamma,
    /// Inverse-Wishart degrees of freedom beyond the dimension.
    pub sigma_extra_df: f64,
    /// Inverse-Wishart scale matrix is `sigma_scale · I`.
    pub sigma_scale: f64,
}

impl Default for LivPriors {
    fn default() -> Self {
        Self {
            coefficient: Normal::new(0.0, 100.0),
            gamma: Normal::new(0.0, 100.0),
            psi: InverseGamma::new(3.0, 1e-3),
            obs_var: InverseGamma::new(3.0, 1e-3),
            sigma_extra_df: 2.0,
            sigma_scale: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivConfig {
    pub model: LivModel,
    pub iterations: usize,
    /// Defaults to a quarter of the iterations.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    pub priors: LivPriors,
}

impl Default for LivConfig {
    fn default() -> Self {
        Self { model: LivModel::Ar1, iterations: 2000, burn_in: None, thin: 1, seed: 0, priors: LivPriors::default() }
    }
}

/// Inputs of one test.
#[derive(Debug, Clone, PartialEq)]
pub struct LivData {
    pub observations: Vec<Option<f64>>,
    pub proxies: Vec<Vec<f64>>,
    pub proxy_names: Vec<String>,
    pub instrument: Option<Vec<f64>>,
    /// `P_t` per day.
    pub potential: Vec<f64>,
    pub delta: f64,
}

impl LivData {
    fn validate(&self, model: LivModel) -> Result<()> {
        let t = self.observations.len();
        if t < 3 {
            return Err(Error::EmptySeries("endogeneity test needs at least 3 days".into()));
        }
        let check = |what: &'static str, n: usize| {
            if n != t {
                Err(Error::DimensionMismatch { what, expected: t, got: n })
            } else {
                Ok(())
            }
        };
        check("potential", self.potential.len())?;
        for p in &self.proxies {
            check("proxy", p.len())?;
        }
        if self.proxy_names.len() != self.proxies.len() {
            return Err(Error::DimensionMismatch {
                what: "proxy names",
                expected: self.proxies.len(),
                got: self.proxy_names.len(),
            });
        }
        if let Some(z) = &self.instrument {
            check("instrument", z.len())?;
        } else if model == LivModel::Instrumented {
            return Err(Error::InvalidParameter("instrumented model needs an instrument".into()));
        }
        if let Some((day, p)) = self.potential.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
            return Err(Error::NonPositivePotential { day: day + 1, value: *p });
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!("delta {} outside [0, 1)", self.delta)));
        }
        if self.observations.iter().flatten().count() < 2 {
            return Err(Error::EmptySeries("endogeneity test needs at least 2 observations".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyResult {
    pub name: String,
    /// The proxy has no variation; nothing can be learned about it.
    pub uninformative: bool,
    pub corr: Option<PosteriorSummary>,
    /// `Sigma_{k,w}`.
    pub cov: Option<PosteriorSummary>,
    /// `(g1, g2[, g3])`.
    pub gamma: Vec<PosteriorSummary>,
    /// Posterior mean of the latent path.
    pub latent_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivResult {
    pub model: LivModel,
    pub proxies: Vec<ProxyResult>,
    /// Drift coefficients `(p0, b_1..b_K, [p2], q)`.
    pub coefficients: Vec<PosteriorSummary>,
    pub nonstationary_rejections: usize,
    pub failed_state_draws: usize,
    pub draws: usize,
    pub config: LivConfig,
}

// ---------------------------------------------------------------------------

struct LivTransition<'a> {
    data: &'a LivData,
    /// External force `p0 + b'mu_t + p2 Z2_t` per day.
    force: Vec<f64>,
    q: f64,
    shift: Vec<f64>,
    state_var: f64,
    obs_var: f64,
}

impl Transition for LivTransition<'_> {
    fn len(&self) -> usize {
        self.force.len()
    }

    fn step(&self, i: usize, x: f64) -> Result<(f64, f64)> {
        let (a, p, d) = (self.force[i], self.data.potential[i], self.data.delta);
        let qd = self.q * (1.0 - d);
        let gap = p - x;
        let drift = (a + qd * x / p) * gap - d * x;
        let jac = 1.0 - (a + qd * x / p) + qd / p * gap - d;
        Ok((x + drift + self.shift[i], jac))
    }

    fn state_var(&self, _: usize) -> f64 {
        self.state_var
    }

    fn obs_var(&self) -> f64 {
        self.obs_var
    }
}

/// Mutable chain state.
struct Chain {
    x: Vec<f64>,
    mu: Vec<DVector<f64>>,
    beta: DVector<f64>,
    gamma: Vec<Vec<f64>>,
    psi: Vec<f64>,
    v: f64,
    sigma: DMatrix<f64>,
}

struct Layout {
    k: usize,
    instrument: bool,
    instrumented_latent: bool,
}

impl Layout {
    fn n_beta(&self) -> usize {
        1 + self.k + self.instrument as usize + 1
    }
    fn n_gamma(&self) -> usize {
        2 + self.instrumented_latent as usize
    }
}

fn force(data: &LivData, lay: &Layout, beta: &DVector<f64>, mu: &[DVector<f64>]) -> Vec<f64> {
    (0..mu.len())
        .map(|t| {
            let mut a = beta[0];
            for k in 0..lay.k {
                a += beta[1 + k] * mu[t][k];
            }
            if lay.instrument {
                a += beta[1 + lay.k] * data.instrument.as_ref().unwrap()[t];
            }
            a
        })
        .collect()
}

/// `(theta_t, conditional shift c'theta_t, conditional variance)` of `w` given theta.
fn conditional_w(sigma: &DMatrix<f64>, k: usize) -> Result<(DVector<f64>, f64)> {
    let s_tt = sigma.view((0, 0), (k, k)).into_owned();
    let s_tw = sigma.view((0, k), (k, 1)).into_owned();
    let inv = s_tt.try_inverse().ok_or(Error::RankDeficientDesign { rows: k, cols: k })?;
    let c = &inv * &s_tw;
    let var = sigma[(k, k)] - (s_tw.transpose() * &c)[(0, 0)];
    Ok((c.column(0).into_owned(), var.max(1e-300)))
}

/// Multivariate FFBS of the latent paths given the diffusion path.
#[allow(clippy::too_many_arguments)]
fn sample_latent(
    data: &LivData,
    lay: &Layout,
    proxies: &[&Vec<f64>],
    ch: &Chain,
    prior_mean: &DVector<f64>,
    prior_var: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DVector<f64>>> {
    let (k, t_len) = (lay.k, ch.x.len());
    let d = data.delta;
    let b = ch.beta.rows(1, k).into_owned();
    let q = ch.beta[lay.n_beta() - 1];
    let trans = DMatrix::from_diagonal(&DVector::from_fn(k, |i, _| ch.gamma[i][1]));
    let psi = DMatrix::from_diagonal(&DVector::from_vec(ch.psi.clone()));
    let sigma_tt = ch.sigma.view((0, 0), (k, k)).into_owned();
    let mut filt_m = Vec::with_capacity(t_len);
    let mut filt_c = Vec::with_capacity(t_len);
    let mut pred_m = Vec::with_capacity(t_len);
    let mut pred_c = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (a, r) = if t == 0 {
            (prior_mean.clone(), prior_var.clone())
        } else {
            let mut c = DVector::from_fn(k, |i, _| ch.gamma[i][0]);
            if lay.instrumented_latent {
                let z2 = data.instrument.as_ref().unwrap()[t];
                for i in 0..k {
                    c[i] += ch.gamma[i][2] * z2;
                }
            }
            let m_prev: &DVector<f64> = &filt_m[t - 1];
            let c_prev: &DMatrix<f64> = &filt_c[t - 1];
            (c + &trans * m_prev, &trans * c_prev * trans.transpose() + &psi)
        };
        let z = DVector::from_fn(k, |i, _| proxies[i][t]);
        let (obs, h, noise) = if t == 0 {
            (z, DMatrix::identity(k, k), sigma_tt.clone())
        } else {
            let xp = ch.x[t - 1];
            let p = data.potential[t];
            let gap = p - xp;
            let mut base = ch.beta[0] + q * (1.0 - d) * xp / p;
            if lay.instrument {
                base += ch.beta[1 + k] * data.instrument.as_ref().unwrap()[t];
            }
            let u = ch.x[t] - xp + d * xp - gap * base;
            let mut obs = DVector::zeros(k + 1);
            obs.rows_mut(0, k).copy_from(&z);
            obs[k] = u;
            let mut h = DMatrix::zeros(k + 1, k);
            h.view_mut((0, 0), (k, k)).copy_from(&DMatrix::identity(k, k));
            for i in 0..k {
                h[(k, i)] = gap * b[i];
            }
            (obs, h, ch.sigma.clone())
        };
        let s = &h * &r * h.transpose() + noise;
        let s_inv = s.try_inverse().ok_or(Error::NumericalBlowup { step: t, variance: f64::NAN })?;
        let gain = &r * h.transpose() * &s_inv;
        let m = &a + &gain * (obs - &h * &a);
        let c = &r - &gain * &h * &r;
        let c = (&c + c.transpose()) * 0.5;
        pred_m.push(a);
        pred_c.push(r);
        filt_m.push(m);
        filt_c.push(c);
    }
    let draw = |mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut ChaCha8Rng| -> Result<DVector<f64>> {
        let jitter = DMatrix::identity(k, k) * (1e-12 * cov.diagonal().max().max(1e-300));
        let chol = (cov + jitter).cholesky().ok_or(Error::NumericalBlowup { step: 0, variance: f64::NAN })?;
        let z = DVector::from_fn(k, |_, _| std_normal(rng));
        Ok(mean + chol.l() * z)
    };
    let mut out = vec![DVector::zeros(k); t_len];
    out[t_len - 1] = draw(&filt_m[t_len - 1], &filt_c[t_len - 1], rng)?;
    for t in (0..t_len - 1).rev() {
        let r_inv =
            pred_c[t + 1].clone().try_inverse().ok_or(Error::NumericalBlowup { step: t, variance: f64::NAN })?;
        let j = &filt_c[t] * trans.transpose() * r_inv;
        let mean = &filt_m[t] + &j * (&out[t + 1] - &pred_m[t + 1]);
        let cov = &filt_c[t] - &j * &pred_c[t + 1] * j.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        out[t] = draw(&mean, &cov, rng)?;
    }
    Ok(out)
}

/// Run the two-step LIV sampler.
pub fn liv_fit(data: &LivData, config: &LivConfig) -> Result<LivResult> {
    data.validate(config.model)?;
    let burn_in = config.burn_in.unwrap_or(config.iterations / 4);
    if config.iterations <= burn_in || config.thin == 0 {
        return Err(Error::InvalidParameter("iterations must exceed burn-in and thin must be >= 1".into()));
    }
    let informative: Vec<bool> = data.proxies.iter().map(|p| sample_var(p) > 0.0).collect();
    let proxies: Vec<&Vec<f64>> =
        data.proxies.iter().zip(&informative).filter(|(_, ok)| **ok).map(|(p, _)| p).collect();
    let lay = Layout {
        k: proxies.len(),
        instrument: data.instrument.is_some(),
        instrumented_latent: config.model == LivModel::Instrumented,
    };
    let names: Vec<String> = data.proxy_names.clone();
    if lay.k == 0 {
        return Ok(LivResult {
            model: config.model,
            proxies: names
                .into_iter()
                .map(|name| ProxyResult {
                    name,
                    uninformative: true,
                    corr: None,
                    cov: None,
                    gamma: Vec::new(),
                    latent_mean: Vec::new(),
                })
                .collect(),
            coefficients: Vec::new(),
            nonstationary_rejections: 0,
            failed_state_draws: 0,
            draws: 0,
            config: config.clone(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pri = &config.priors;
    let (k, t_len) = (lay.k, data.observations.len());
    let ys: Vec<f64> = data.observations.iter().flatten().copied().collect();
    let dy: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let var_dy = sample_var(&dy).max(1e-8);
    let init = FilterInit::diffuse(&data.observations)?;

    // initial state
    let mut sigma = DMatrix::zeros(k + 1, k + 1);
    for i in 0..k {
        sigma[(i, i)] = (0.5 * sample_var(proxies[i])).max(1e-8);
    }
    sigma[(k, k)] = 0.5 * var_dy;
    let mut ch = Chain {
        x: Vec::new(),
        mu: (0..t_len).map(|t| DVector::from_fn(k, |i, _| proxies[i][t])).collect(),
        beta: DVector::zeros(lay.n_beta()),
        gamma: (0..k)
            .map(|i| {
                let mut g = vec![0.5 * mean(proxies[i]), 0.5];
                if lay.instrumented_latent {
                    g.push(0.0);
                }
                g
            })
            .collect(),
        psi: (0..k)
            .map(|i| {
                let d: Vec<f64> = proxies[i].windows(2).map(|w| w[1] - w[0]).collect();
                (0.5 * sample_var(&d)).max(1e-8)
            })
            .collect(),
        v: 0.5 * var_dy,
        sigma,
    };
    let prior_mean = DVector::from_fn(k, |i, _| proxies[i][0]);
    let prior_var = DMatrix::from_diagonal(&DVector::from_fn(k, |i, _| 10.0 * sample_var(proxies[i]) + 1e-8));

    let mut corr_draws = vec![Vec::new(); k];
    let mut cov_draws = vec![Vec::new(); k];
    let mut gamma_draws = vec![vec![Vec::new(); lay.n_gamma()]; k];
    let mut beta_draws = vec![Vec::new(); lay.n_beta()];
    let mut latent_sum = vec![vec![0.0; t_len]; k];
    let mut rejections = 0;
    let mut failed = 0;
    let mut failed_run = 0;
    let mut kept = 0;
    let opts = FilterOptions::default();
    let z2 = data.instrument.as_deref();

    for it in 0..config.iterations {
        let counting = it >= burn_in;
        // step 1: diffusion path given the latent covariate and theta
        let (c, w_var) = conditional_w(&ch.sigma, k)?;
        let theta: Vec<DVector<f64>> =
            (0..t_len).map(|t| DVector::from_fn(k, |i, _| proxies[i][t]) - &ch.mu[t]).collect();
        let shift: Vec<f64> = theta.iter().map(|th| c.dot(th)).collect();
        let f = force(data, &lay, &ch.beta, &ch.mu);
        let trans = LivTransition {
            data,
            force: f,
            q: ch.beta[lay.n_beta() - 1],
            shift: shift.clone(),
            state_var: w_var,
            obs_var: ch.v,
        };
        match ekf_forward(&trans, &data.observations, init, &opts).and_then(|o| ffbs_sample(&o, false, &mut rng)) {
            Ok(s) => {
                ch.x = s.path;
                failed_run = 0;
            }
            Err(e) if ch.x.is_empty() => return Err(e),
            Err(_) => {
                failed += 1;
                failed_run += 1;
                if failed_run >= crate::sampler::DIVERGENCE_LIMIT {
                    return Err(Error::ChainDiverged { iteration: it });
                }
            }
        }
        // V
        let (n_obs, ss) = data
            .observations
            .iter()
            .zip(&ch.x)
            .filter_map(|(y, x)| y.map(|y| (y - x) * (y - x)))
            .fold((0, 0.0), |(n, s), r| (n + 1, s + r));
        ch.v = pri.obs_var.posterior_draw(n_obs, ss, &mut rng);

        // drift coefficients given x, mu and theta
        let d = data.delta;
        let mut st = RegressionStats::new(lay.n_beta());
        let mut row = vec![0.0; lay.n_beta()];
        for t in 1..t_len {
            let xp = ch.x[t - 1];
            let p = data.potential[t];
            let gap = p - xp;
            row[0] = gap;
            for i in 0..k {
                row[1 + i] = gap * ch.mu[t][i];
            }
            if let Some(z2) = z2 {
                row[1 + k] = gap * z2[t];
            }
            row[lay.n_beta() - 1] = (1.0 - d) * xp * gap / p;
            st.push(&row, ch.x[t] - xp + d * xp - shift[t]);
        }
        ch.beta = st.posterior(&vec![pri.coefficient; lay.n_beta()], w_var)?.sample(&mut rng);

        // step 2: latent covariate given x
        ch.mu = sample_latent(data, &lay, &proxies, &ch, &prior_mean, &prior_var, &mut rng)?;

        // AR coefficients and Psi per latent series
        for i in 0..k {
            let mut st = RegressionStats::new(lay.n_gamma());
            let mut row = vec![1.0; lay.n_gamma()];
            for t in 1..t_len {
                row[1] = ch.mu[t - 1][i];
                if let Some(z2) = z2.filter(|_| lay.instrumented_latent) {
                    row[2] = z2[t];
                }
                st.push(&row, ch.mu[t][i]);
            }
            let post = st.posterior(&vec![pri.gamma; lay.n_gamma()], ch.psi[i])?;
            // keep the previous gamma if every try is nonstationary
            for _ in 0..MAX_STATIONARITY_TRIES {
                let g = post.sample(&mut rng);
                if g[1].abs() < 1.0 {
                    ch.gamma[i] = g.iter().copied().collect();
                    break;
                }
                if counting {
                    rejections += 1;
                }
            }
            let mut ss = 0.0;
            for t in 1..t_len {
                let mut m = ch.gamma[i][0] + ch.gamma[i][1] * ch.mu[t - 1][i];
                if let Some(z2) = z2.filter(|_| lay.instrumented_latent) {
                    m += ch.gamma[i][2] * z2[t];
                }
                ss += (ch.mu[t][i] - m).powi(2);
            }
            ch.psi[i] = pri.psi.posterior_draw(t_len - 1, ss, &mut rng);
        }

        // Sigma from stacked (theta, w) residuals
        let f = force(data, &lay, &ch.beta, &ch.mu);
        let q = ch.beta[lay.n_beta() - 1];
        let mut scatter = DMatrix::identity(k + 1, k + 1) * pri.sigma_scale;
        for t in 1..t_len {
            let xp = ch.x[t - 1];
            let p = data.potential[t];
            let drift = (f[t] + q * (1.0 - d) * xp / p) * (p - xp) - d * xp;
            let mut e = DVector::zeros(k + 1);
            for i in 0..k {
                e[i] = proxies[i][t] - ch.mu[t][i];
            }
            e[k] = ch.x[t] - xp - drift;
            scatter += &e * e.transpose();
        }
        let df = (k + 1) as f64 + pri.sigma_extra_df + (t_len - 1) as f64;
        ch.sigma = sample_inverse_wishart(df, &scatter, &mut rng)?;

        if counting && (it - burn_in).is_multiple_of(config.thin) {
            kept += 1;
            for i in 0..k {
                let cov = ch.sigma[(i, k)];
                corr_draws[i].push(cov / (ch.sigma[(i, i)] * ch.sigma[(k, k)]).sqrt());
                cov_draws[i].push(cov);
                for (g, draws) in ch.gamma[i].iter().zip(gamma_draws[i].iter_mut()) {
                    draws.push(*g);
                }
                for t in 0..t_len {
                    latent_sum[i][t] += ch.mu[t][i];
                }
            }
            for (b, draws) in ch.beta.iter().zip(beta_draws.iter_mut()) {
                draws.push(*b);
            }
        }
    }

    let mut results = Vec::with_capacity(names.len());
    let mut slot = 0;
    for (name, ok) in names.into_iter().zip(&informative) {
        if !ok {
            results.push(ProxyResult {
                name,
                uninformative: true,
                corr: None,
                cov: None,
                gamma: Vec::new(),
                latent_mean: Vec::new(),
            });
            continue;
        }
        let i = slot;
        slot += 1;
        results.push(ProxyResult {
            name,
            uninformative: false,
            corr: Some(PosteriorSummary::from_draws(&corr_draws[i])?),
            cov: Some(PosteriorSummary::from_draws(&cov_draws[i])?),
            gamma: gamma_draws[i].iter().map(|d| PosteriorSummary::from_draws(d)).collect::<Result<_>>()?,
            latent_mean: latent_sum[i].iter().map(|s| s / kept as f64).collect(),
        });
    }
    Ok(LivResult {
        model: config.model,
        proxies: results,
        coefficients: beta_draws.iter().map(|d| PosteriorSummary::from_draws(d)).collect::<Result<_>>()?,
        nonstationary_rejections: rejections,
        failed_state_draws: failed,
        draws: kept,
        config: config.clone(),
    })
}

/// LIV test of the platform's effort covariate, with the queue length (the
/// next governance column, when present) as the instrument.
pub fn liv_fit_effort(panel: &ObservationPanel, m0: f64, kappa: f64, config: &LivConfig) -> Result<LivResult> {
    let frames = &panel.platform.frames;
    if panel.platform.frames.first().is_none_or(|f| f.z.get(EFFORT_COLUMN).is_none()) {
        return Err(Error::MissingColumn("effort covariate in the governance block".into()));
    }
    let instrument =
        (panel.n_governance() > EFFORT_COLUMN + 1).then(|| frames.iter().map(|f| f.z[EFFORT_COLUMN + 1]).collect());
    let data = LivData {
        observations: panel.platform.observations.clone(),
        proxies: vec![frames.iter().map(|f| f.z[EFFORT_COLUMN]).collect()],
        proxy_names: vec!["effort".into()],
        instrument,
        potential: frames.iter().map(|f| m0 + kappa * f.addons).collect(),
        delta: 0.0,
    };
    liv_fit(&data, config)
}

/// Per-complement LIV test of the two smoothed release signals (platform
/// release PV and own release AV). `plugins[j]` supplies alpha and delta;
/// `platform_path[d-1]` is the platform level on day `d`.
pub fn liv_fit_releases(
    panel: &ObservationPanel,
    plugins: &[ComplementParams],
    platform_path: &[f64],
    config: &LivConfig,
) -> Result<Vec<(String, LivResult)>> {
    if plugins.len() != panel.complements.len() {
        return Err(Error::DimensionMismatch {
            what: "complement plug-ins",
            expected: panel.complements.len(),
            got: plugins.len(),
        });
    }
    panel
        .complements
        .par_iter()
        .zip(plugins.par_iter())
        .enumerate()
        .map(|(j, (c, params))| {
            if c.is_empty() {
                return Err(Error::EmptySeries(format!("complement '{}' window", c.id)));
            }
            let potential: Vec<f64> = c
                .days()
                .map(|day| params.alpha * platform_path[day.saturating_sub(2).min(platform_path.len() - 1)])
                .collect();
            let data = LivData {
                observations: c.observations.clone(),
                proxies: vec![c.frames.iter().map(|f| f.pv).collect(), c.frames.iter().map(|f| f.av).collect()],
                proxy_names: vec!["platform_release".into(), "complement_release".into()],
                instrument: None,
                potential,
                delta: params.delta,
            };
            let cfg = LivConfig { seed: config.seed.wrapping_add(j as u64), ..config.clone() };
            Ok((c.id.clone(), liv_fit(&data, &cfg)?))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// tables

fn star(s: &PosteriorSummary) -> &'static str {
    if s.significant() {
        "*"
    } else {
        ""
    }
}

/// `model,estimate,mean,sd,q025,q975` rows: Corr and Sigma_21 per model.
pub fn write_effort_table(path: &Path, results: &[(String, LivResult)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
    w.write_record(["model", "estimate", "mean", "sd", "q025", "q975"])?;
    for (label, r) in results {
        for p in &r.proxies {
            for (what, s) in [("corr", p.corr), ("sigma21", p.cov)] {
                match s {
                    Some(s) => w.write_record([
                        label.clone(),
                        format!("{what}({})", p.name),
                        format!("{}", s.estimate),
                        format!("{}", s.sd),
                        format!("{}", s.q025),
                        format!("{}", s.q975),
                    ])?,
                    None => w.write_record([
                        label.clone(),
                        format!("{what}({})", p.name),
                        "uninformative".into(),
                        "".into(),
                        "".into(),
                        "".into(),
                    ])?,
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per complement with the eight interval columns of the release
/// test; significant intervals carry a trailing `*`.
pub fn write_release_table(path: &Path, results: &[(String, LivResult)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
    w.write_record([
        "complement",
        "corr1_q025",
        "corr1_q975",
        "corr2_q025",
        "corr2_q975",
        "sigma13_q025",
        "sigma13_q975",
        "sigma23_q025",
        "sigma23_q975",
    ])?;
    for (id, r) in results {
        let mut row = vec![id.clone()];
        let mut covs = Vec::new();
        for p in r.proxies.iter().take(2) {
            match (p.corr, p.cov) {
                (Some(c), Some(s)) => {
                    row.push(format!("{}{}", c.q025, star(&c)));
                    row.push(format!("{}{}", c.q975, star(&c)));
                    covs.push(format!("{}{}", s.q025, star(&s)));
                    covs.push(format!("{}{}", s.q975, star(&s)));
                }
                _ => {
                    row.extend(["uninformative".to_string(), "uninformative".to_string()]);
                    covs.extend(["uninformative".to_string(), "uninformative".to_string()]);
                }
            }
        }
        row.extend(covs);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// synthetic data

/// Generating process for synthetic tests of [`liv_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivSimulation {
    pub horizon: usize,
    pub potential: f64,
    pub x0: f64,
    pub p0: f64,
    pub b: Vec<f64>,
    pub q: f64,
    pub delta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub psi: f64,
    pub theta_var: f64,
    pub w_var: f64,
    pub obs_var: f64,
    /// `Corr(w, theta_k)` for every proxy.
    pub corr: f64,
    pub seed: u64,
}

impl Default for LivSimulation {
    fn default() -> Self {
        Self {
            horizon: 1000,
            potential: 100.0,
            x0: 5.0,
            p0: 0.002,
            b: vec![0.002],
            q: 0.01,
            delta: 0.0,
            gamma1: 0.2,
            gamma2: 0.8,
            psi: 0.04,
            theta_var: 0.04,
            w_var: 0.04,
            obs_var: 0.01,
            corr: 0.0,
            seed: 0,
        }
    }
}

impl LivSimulation {
    pub fn generate(&self) -> Result<LivData> {
        let k = self.b.len();
        let mut cov = DMatrix::zeros(k + 1, k + 1);
        for i in 0..k {
            cov[(i, i)] = self.theta_var;
            let c = self.corr * (self.theta_var * self.w_var).sqrt();
            cov[(i, k)] = c;
            cov[(k, i)] = c;
        }
        cov[(k, k)] = self.w_var;
        let chol =
            cov.cholesky().ok_or_else(|| Error::InvalidParameter("error covariance not positive definite".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let stationary = self.gamma1 / (1.0 - self.gamma2);
        let mut mu = vec![stationary; k];
        let mut x = self.x0;
        let (mut obs, mut proxies) = (Vec::with_capacity(self.horizon), vec![Vec::with_capacity(self.horizon); k]);
        for _ in 0..self.horizon {
            for m in mu.iter_mut() {
                *m = self.gamma1 + self.gamma2 * *m + self.psi.sqrt() * std_normal(&mut rng);
            }
            let z = DVector::from_fn(k + 1, |_, _| std_normal(&mut rng));
            let e = chol.l() * z;
            let p = self.potential;
            let force = self.p0 + self.b.iter().zip(&mu).map(|(b, m)| b * m).sum::<f64>();
            x += (force + self.q * (1.0 - self.delta) * x / p) * (p - x) - self.delta * x + e[k];
            for i in 0..k {
                proxies[i].push(mu[i] + e[i]);
            }
            obs.push(Some(x + self.obs_var.sqrt() * std_normal(&mut rng)));
        }
        Ok(LivData {
            observations: obs,
            proxies,
            proxy_names: (1..=k).map(|i| format!("proxy{i}")).collect(),
            instrument: None,
            potential: vec![self.potential; self.horizon],
            delta: self.delta,
        })
    }
}
