//! Scalar extended Kalman filter and forward-filtering backward-sampling.
//!
//! A series of `n` days is filtered with the prior `init` acting as the
//! predictive distribution of the first day's state. Every later day `i`
//! predicts `a_i = g_i(m_{i-1})`, `R_i = J_i² C_{i-1} + W_i` with `J_i` the
//! Jacobian of `g_i` at the previous filtered mean, then updates with the
//! observation (if present) under noise variance `V`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    complement_drift, complement_forces, complement_jacobian, market_potential, platform_drift,
    platform_external_force, platform_jacobian, ComplementFrame, ComplementParams, PlatformFrame, PlatformParams,
};
use crate::stats::{normal_logpdf, std_normal};

/// Default ceiling on any filter variance before it is declared a blowup.
pub const DEFAULT_VARIANCE_CEILING: f64 = 1e12;

/// Maximum redraws of a negative backward draw before it is floored at zero.
pub const MAX_NEGATIVE_REDRAWS: usize = 100;

/// One step of a scalar state transition `x_i = g_i(x_{i-1}) + w_i`.
pub trait Transition {
    /// Number of days in the series.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(g_i(x_prev), g_i'(x_prev))` for day position `i >= 1`.
    fn step(&self, i: usize, x_prev: f64) -> Result<(f64, f64)>;

    /// State noise variance for day position `i >= 1`.
    fn state_var(&self, i: usize) -> f64;

    fn obs_var(&self) -> f64;
}

/// Prior of the first day's state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterInit {
    pub mean: f64,
    pub var: f64,
}

impl FilterInit {
    pub const WINDOW: usize = 30;
    pub const FACTOR: f64 = 10.0;
    pub const FLOOR: f64 = 1e-10;

    /// Diffuse initialization: mean at the first observation, variance ten
    /// times the sample variance of the first 30 observations.
    pub fn diffuse(observations: &[Option<f64>]) -> Result<Self> {
        Self::diffuse_with(observations, Self::WINDOW, Self::FACTOR, Self::FLOOR)
    }

    pub fn diffuse_with(observations: &[Option<f64>], window: usize, factor: f64, floor: f64) -> Result<Self> {
        let first: Vec<f64> = observations.iter().flatten().copied().take(window).collect();
        let Some(&mean) = first.first() else {
            return Err(Error::EmptySeries("no observation to initialize the filter".into()));
        };
        let var = (factor * crate::stats::sample_var(&first)).max(floor);
        Ok(Self { mean, var })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub variance_ceiling: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { variance_ceiling: DEFAULT_VARIANCE_CEILING }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterOutput {
    pub pred_mean: Vec<f64>,
    pub pred_var: Vec<f64>,
    pub filt_mean: Vec<f64>,
    pub filt_var: Vec<f64>,
    /// One-step-ahead observation mean and variance.
    pub fc_mean: Vec<f64>,
    pub fc_var: Vec<f64>,
    /// Log-likelihood increment; zero on missing days.
    pub loglik_inc: Vec<f64>,
    /// Jacobian of the transition into day `i`; `jac[0]` is unused and set to 1.
    pub jac: Vec<f64>,
    pub loglik: f64,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.filt_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filt_mean.is_empty()
    }
}

fn check_var(step: usize, variance: f64, options: &FilterOptions) -> Result<()> {
    if !variance.is_finite() || variance > options.variance_ceiling || variance <= 0.0 {
        return Err(Error::NumericalBlowup { step, variance });
    }
    Ok(())
}

/// Forward EKF pass over `observations` (one entry per day of `model`).
pub fn ekf_forward<T: Transition + ?Sized>(
    model: &T,
    observations: &[Option<f64>],
    init: FilterInit,
    options: &FilterOptions,
) -> Result<FilterOutput> {
    let n = model.len();
    if n == 0 {
        return Err(Error::EmptySeries("filter input".into()));
    }
    if observations.len() != n {
        return Err(Error::DimensionMismatch { what: "filter observations", expected: n, got: observations.len() });
    }
    let v = model.obs_var();
    if !(v > 0.0) || !(init.var > 0.0) {
        return Err(Error::InvalidParameter(format!("filter needs positive variances (V = {v}, init = {})", init.var)));
    }
    let mut out = FilterOutput {
        pred_mean: Vec::with_capacity(n),
        pred_var: Vec::with_capacity(n),
        filt_mean: Vec::with_capacity(n),
        filt_var: Vec::with_capacity(n),
        fc_mean: Vec::with_capacity(n),
        fc_var: Vec::with_capacity(n),
        loglik_inc: Vec::with_capacity(n),
        jac: Vec::with_capacity(n),
        loglik: 0.0,
    };
    let (mut m, mut c) = (init.mean, init.var);
    for i in 0..n {
        let (a, r, j) = if i == 0 {
            (init.mean, init.var, 1.0)
        } else {
            let (g, j) = model.step(i, m)?;
            (g, j * j * c + model.state_var(i), j)
        };
        check_var(i, r, options)?;
        let q = r + v;
        let (ll, m_new, c_new) = match observations[i] {
            Some(y) => {
                let k = r / q;
                (normal_logpdf(y, a, q), a + k * (y - a), r * v / q)
            }
            None => (0.0, a, r),
        };
        check_var(i, c_new, options)?;
        if !m_new.is_finite() {
            return Err(Error::NumericalBlowup { step: i, variance: c_new });
        }
        m = m_new;
        c = c_new;
        out.pred_mean.push(a);
        out.pred_var.push(r);
        out.fc_mean.push(a);
        out.fc_var.push(q);
        out.filt_mean.push(m);
        out.filt_var.push(c);
        out.loglik_inc.push(ll);
        out.jac.push(j);
        out.loglik += ll;
    }
    Ok(out)
}

/// A sampled state path and how often the nonnegativity guard intervened.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampledPath {
    pub path: Vec<f64>,
    pub redraws: usize,
    pub floored: usize,
}

fn draw_nonneg<R: Rng + ?Sized>(mean: f64, sd: f64, nonneg: bool, stats: &mut SampledPath, rng: &mut R) -> f64 {
    let mut x = mean + sd * std_normal(rng);
    if !nonneg {
        return x;
    }
    let mut tries = 0;
    while x < 0.0 && tries < MAX_NEGATIVE_REDRAWS {
        x = mean + sd * std_normal(rng);
        tries += 1;
        stats.redraws += 1;
    }
    if x < 0.0 {
        stats.floored += 1;
        x = 0.0;
    }
    x
}

/// Backward sampling from a completed forward pass. The linearized backward
/// conditional uses the Jacobians stored by the forward pass, which are
/// evaluated at the filtered means.
pub fn ffbs_sample<R: Rng + ?Sized>(out: &FilterOutput, nonnegative: bool, rng: &mut R) -> Result<SampledPath> {
    let n = out.len();
    if n == 0 {
        return Err(Error::EmptySeries("ffbs input".into()));
    }
    let mut res = SampledPath { path: vec![0.0; n], redraws: 0, floored: 0 };
    let last = draw_nonneg(out.filt_mean[n - 1], out.filt_var[n - 1].sqrt(), nonnegative, &mut res, rng);
    res.path[n - 1] = last;
    for i in (0..n - 1).rev() {
        let (m, c) = (out.filt_mean[i], out.filt_var[i]);
        let (a, r, j) = (out.pred_mean[i + 1], out.pred_var[i + 1], out.jac[i + 1]);
        let gain = c * j / r;
        let mean = m + gain * (res.path[i + 1] - a);
        let var = (c - gain * gain * r).max(0.0);
        if !mean.is_finite() || !var.is_finite() {
            return Err(Error::NumericalBlowup { step: i, variance: var });
        }
        res.path[i] = draw_nonneg(mean, var.sqrt(), nonnegative, &mut res, rng);
    }
    Ok(res)
}

/// Rauch-Tung-Striebel smoothed moments of the linearized model.
pub fn rts_smoother(out: &FilterOutput) -> (Vec<f64>, Vec<f64>) {
    let n = out.len();
    let mut mean = out.filt_mean.clone();
    let mut var = out.filt_var.clone();
    for i in (0..n.saturating_sub(1)).rev() {
        let g = out.filt_var[i] * out.jac[i + 1] / out.pred_var[i + 1];
        mean[i] = out.filt_mean[i] + g * (mean[i + 1] - out.pred_mean[i + 1]);
        var[i] = out.filt_var[i] + g * g * (var[i + 1] - out.pred_var[i + 1]);
    }
    (mean, var)
}

// ---------------------------------------------------------------------------
// model transitions

/// Platform transition over days `1..=T`.
#[derive(Debug, Clone)]
pub struct PlatformTransition {
    p: Vec<f64>,
    potential: Vec<f64>,
    q: f64,
    obs_var: f64,
    state_var: f64,
}

impl PlatformTransition {
    pub fn new(params: &PlatformParams, frames: &[PlatformFrame]) -> Result<Self> {
        let mut p = Vec::with_capacity(frames.len());
        let mut potential = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            p.push(platform_external_force(params, f)?);
            potential.push(market_potential(params.m0, params.kappa, f.addons).map_err(|e| match e {
                Error::NonPositivePotential { value, .. } => Error::NonPositivePotential { day: i + 1, value },
                e => e,
            })?);
        }
        Ok(Self { p, potential, q: params.q, obs_var: params.obs_var, state_var: params.state_var })
    }

    pub fn external_force(&self) -> &[f64] {
        &self.p
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }
}

impl Transition for PlatformTransition {
    fn len(&self) -> usize {
        self.p.len()
    }

    fn step(&self, i: usize, m_prev: f64) -> Result<(f64, f64)> {
        let (p, pot) = (self.p[i], self.potential[i]);
        Ok((m_prev + platform_drift(m_prev, p, self.q, pot)?, platform_jacobian(m_prev, p, self.q, pot)?))
    }

    fn state_var(&self, _: usize) -> f64 {
        self.state_var
    }

    fn obs_var(&self) -> f64 {
        self.obs_var
    }
}

/// Complement transition over its window, conditional on a platform path.
#[derive(Debug, Clone)]
pub struct ComplementTransition {
    p: Vec<f64>,
    q: Vec<f64>,
    /// Platform state on the previous day, per window position.
    m_prev: Vec<f64>,
    alpha: f64,
    delta: f64,
    obs_var: f64,
    state_var: f64,
}

impl ComplementTransition {
    /// `platform_path[d - 1]` is the platform state on day `d`.
    pub fn new(
        params: &ComplementParams,
        frames: &[ComplementFrame],
        launch: usize,
        platform_path: &[f64],
    ) -> Result<Self> {
        let n = frames.len();
        if launch < 1 || launch + n - 1 > platform_path.len() {
            return Err(Error::WindowViolation(format!(
                "complement window [{launch}, {}] not covered by a platform path of {} days",
                launch + n - 1,
                platform_path.len()
            )));
        }
        let (p, q) = frames.iter().map(|f| complement_forces(params, f)).unzip();
        let m_prev = (0..n)
            .map(|i| {
                let day = launch + i;
                if day >= 2 {
                    platform_path[day - 2]
                } else {
                    f64::NAN
                }
            })
            .collect();
        Ok(Self {
            p,
            q,
            m_prev,
            alpha: params.alpha,
            delta: params.delta,
            obs_var: params.obs_var,
            state_var: params.state_var,
        })
    }

    pub fn forces(&self, i: usize) -> (f64, f64) {
        (self.p[i], self.q[i])
    }

    pub fn platform_prev(&self, i: usize) -> f64 {
        self.m_prev[i]
    }
}

impl Transition for ComplementTransition {
    fn len(&self) -> usize {
        self.p.len()
    }

    fn step(&self, i: usize, n_prev: f64) -> Result<(f64, f64)> {
        let (p, q, m) = (self.p[i], self.q[i], self.m_prev[i]);
        let d = complement_drift(n_prev, m, p, q, self.alpha, self.delta)?;
        let j = complement_jacobian(n_prev, m, p, q, self.alpha, self.delta)?;
        Ok((n_prev + d, j))
    }

    fn state_var(&self, _: usize) -> f64 {
        self.state_var
    }

    fn obs_var(&self) -> f64 {
        self.obs_var
    }
}

/// Filter and backward-sample complement `j` given a platform path.
#[allow(clippy::too_many_arguments)]
pub fn conditional_complement_pass<R: Rng + ?Sized>(
    observations: &[Option<f64>],
    params: &ComplementParams,
    frames: &[ComplementFrame],
    launch: usize,
    platform_path: &[f64],
    init: FilterInit,
    options: &FilterOptions,
    rng: &mut R,
) -> Result<(SampledPath, FilterOutput)> {
    let model = ComplementTransition::new(params, frames, launch, platform_path)?;
    let out = ekf_forward(&model, observations, init, options)?;
    let path = ffbs_sample(&out, true, rng)?;
    Ok((path, out))
}
