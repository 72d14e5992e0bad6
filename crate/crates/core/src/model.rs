//! Deterministic parts of the joint platform/complement state-space model.
//!
//! Time is discrete with a step of one day. The platform state `m` is the
//! latent cumulative number of platform adopters, the complement state `n_j`
//! the latent cumulative number of adopters of complement `j`. All values are
//! in rescaled model units.
//!
//! Platform recursion:
//!
//! ```text
//! p_t = p0 + X_t·beta + Z_t·rho
//! M_t = M0 + kappa·A_t
//! m_t = m_{t-1} + (p_t + q·m_{t-1}/M_t)(M_t - m_{t-1}) + w_t
//! ```
//!
//! Complement recursion (conditions on the previous platform state):
//!
//! ```text
//! n_t = n_{t-1} + (p_jt + q_jt(1-delta)·n_{t-1}/(alpha·m_{t-1}))(alpha·m_{t-1} - n_{t-1})
//!       - delta·n_{t-1} + w_jt
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible complement potential `alpha·m`.
pub const POTENTIAL_FLOOR: f64 = 1e-12;

/// Number of entries in the per-complement parameter vector explained by the hierarchy.
pub const THETA_DIM: usize = 9;

/// Fixed ordering of the hierarchical parameter vector.
pub const THETA_NAMES: [&str; THETA_DIM] = ["alpha", "delta", "p0", "p1", "p2", "q0", "q1", "q2", "q3"];

/// Business-model and license dummies, after the intercept column.
pub const DUMMY_NAMES: [&str; 5] = ["ask_money", "meet_developer", "fully_free", "restricted", "mozilla"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformParams {
    /// Baseline external force.
    pub p0: f64,
    /// Coefficients on competitor usage `X_t`.
    pub beta: Vec<f64>,
    /// Coefficients on governance covariates `Z_t`.
    pub rho: Vec<f64>,
    /// Internal (imitation) force.
    pub q: f64,
    /// Baseline market potential.
    pub m0: f64,
    /// Market-potential sensitivity to cumulative complements.
    pub kappa: f64,
    pub obs_var: f64,
    pub state_var: f64,
}

impl PlatformParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m0 > 0.0) {
            return Err(Error::InvalidParameter(format!("M0 = {} must be > 0", self.m0)));
        }
        if !(self.obs_var > 0.0) || !(self.state_var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "platform variances must be > 0 (V = {}, W = {})",
                self.obs_var, self.state_var
            )));
        }
        Ok(())
    }

    pub fn check_dims(&self, n_competitors: usize, n_governance: usize) -> Result<()> {
        if self.beta.len() != n_competitors {
            return Err(Error::DimensionMismatch { what: "beta", expected: n_competitors, got: self.beta.len() });
        }
        if self.rho.len() != n_governance {
            return Err(Error::DimensionMismatch { what: "rho", expected: n_governance, got: self.rho.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementParams {
    /// Relevance fraction in (0, 1).
    pub alpha: f64,
    /// Daily dis-adoption rate in (0, 1).
    pub delta: f64,
    pub p0: f64,
    /// Coefficient on the platform-release signal PV.
    pub p1: f64,
    /// Coefficient on the complement-release signal AV.
    pub p2: f64,
    pub q0: f64,
    /// Coefficient on rating variance.
    pub q1: f64,
    /// Coefficient on observational learning.
    pub q2: f64,
    /// Coefficient on rating mean.
    pub q3: f64,
    /// Interaction coefficients on PV·AV, RTV·OL and RTV·STAVG. Zero unless the
    /// interaction variant is fitted.
    #[serde(default)]
    pub interaction: [f64; 3],
    pub obs_var: f64,
    pub state_var: f64,
}

impl ComplementParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {} not in (0,1)", self.alpha)));
        }
        // delta = 0 is admissible for the no-churn variant
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {} not in [0,1)", self.delta)));
        }
        if !(self.obs_var > 0.0) || !(self.state_var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "complement variances must be > 0 (V = {}, W = {})",
                self.obs_var, self.state_var
            )));
        }
        Ok(())
    }

    pub fn theta(&self) -> [f64; THETA_DIM] {
        [self.alpha, self.delta, self.p0, self.p1, self.p2, self.q0, self.q1, self.q2, self.q3]
    }

    pub fn set_theta(&mut self, theta: &[f64; THETA_DIM]) {
        self.alpha = theta[0];
        self.delta = theta[1];
        self.p0 = theta[2];
        self.p1 = theta[3];
        self.p2 = theta[4];
        self.q0 = theta[5];
        self.q1 = theta[6];
        self.q2 = theta[7];
        self.q3 = theta[8];
    }
}

/// Platform covariates for one day, in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformFrame {
    /// Competitor daily usage (rescaled, demeaned).
    pub x: Vec<f64>,
    /// Governance covariates: AMO contributions and nomination-queue length.
    pub z: Vec<f64>,
    /// Cumulative add-ons created (rescaled).
    pub addons: f64,
}

/// Complement covariates for one day, in model units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplementFrame {
    /// Smoothed platform-release signal.
    pub pv: f64,
    /// Smoothed complement-release signal.
    pub av: f64,
    /// Rating variance.
    pub rtv: f64,
    /// Rating mean.
    pub stavg: f64,
    /// Observational-learning share.
    pub ol: f64,
}

/// Business-model / license dummies and the Eq.-9-style coefficient layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyDesign {
    /// One row per complement, intercept first.
    pub dummies: Vec<Vec<f64>>,
    /// One row per design column, each a full parameter vector.
    pub eta: Vec<[f64; THETA_DIM]>,
    /// Diagonal residual variance of the parameter vector.
    pub residual_var: [f64; THETA_DIM],
}

impl HierarchyDesign {
    pub fn intercept_only(j: usize, mean: [f64; THETA_DIM]) -> Self {
        Self { dummies: vec![vec![1.0]; j], eta: vec![mean], residual_var: [0.0; THETA_DIM] }
    }

    /// Mean parameter vector `D_j·eta` for complement `j`.
    pub fn mean_theta(&self, j: usize) -> Result<[f64; THETA_DIM]> {
        let row = &self.dummies[j];
        if row.len() != self.eta.len() {
            return Err(Error::DimensionMismatch {
                what: "hierarchy design row",
                expected: self.eta.len(),
                got: row.len(),
            });
        }
        let mut out = [0.0; THETA_DIM];
        for (d, eta_row) in row.iter().zip(&self.eta) {
            for k in 0..THETA_DIM {
                out[k] += d * eta_row[k];
            }
        }
        Ok(out)
    }
}

/// Which blocks of the full model are switched off. The default is the full
/// (proposed) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Pin delta = 0 for every complement.
    pub no_churn: bool,
    /// Pin rho = 0.
    pub no_governance: bool,
    /// Pin kappa = 0.
    pub no_addon_effect: bool,
    /// Pin p1j = p2j = 0.
    pub no_external_covariates: bool,
    /// Pin q1j = q2j = q3j = 0.
    pub no_internal_covariates: bool,
    /// Add PV·AV, RTV·OL, RTV·STAVG regressors.
    pub interactions: bool,
    /// Replace smoothed release signals by raw release-day indicators.
    pub no_release_carryover: bool,
    /// Per entry of the parameter vector: regress on the full dummy design
    /// (true) or on an intercept only (false).
    pub explained: [bool; THETA_DIM],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            no_churn: false,
            no_governance: false,
            no_addon_effect: false,
            no_external_covariates: false,
            no_internal_covariates: false,
            interactions: false,
            no_release_carryover: false,
            explained: [true; THETA_DIM],
        }
    }
}

impl ModelConfig {
    /// Entries of the parameter vector that are free (not pinned to zero).
    pub fn theta_active(&self) -> [bool; THETA_DIM] {
        let ext = !self.no_external_covariates;
        let int = !self.no_internal_covariates;
        [true, !self.no_churn, true, ext, ext, true, int, int, int]
    }

    /// Zero out every pinned coefficient.
    pub fn apply_pins(&self, platform: &mut PlatformParams, complements: &mut [ComplementParams]) {
        if self.no_governance {
            platform.rho.iter_mut().for_each(|r| *r = 0.0);
        }
        if self.no_addon_effect {
            platform.kappa = 0.0;
        }
        let active = self.theta_active();
        for c in complements.iter_mut() {
            let mut theta = c.theta();
            for k in 0..THETA_DIM {
                if !active[k] {
                    theta[k] = 0.0;
                }
            }
            c.set_theta(&theta);
            if !self.interactions {
                c.interaction = [0.0; 3];
            }
        }
    }
}

/// `M_t = M0 + kappa·A_t`.
pub fn market_potential(m0: f64, kappa: f64, addons: f64) -> Result<f64> {
    let m = m0 + kappa * addons;
    if m > 0.0 {
        Ok(m)
    } else {
        Err(Error::NonPositivePotential { day: 0, value: m })
    }
}

/// `p_t = p0 + X_t·beta + Z_t·rho`.
pub fn platform_external_force(params: &PlatformParams, frame: &PlatformFrame) -> Result<f64> {
    params.check_dims(frame.x.len(), frame.z.len())?;
    let xb: f64 = frame.x.iter().zip(&params.beta).map(|(x, b)| x * b).sum();
    let zr: f64 = frame.z.iter().zip(&params.rho).map(|(z, r)| z * r).sum();
    Ok(params.p0 + xb + zr)
}

/// External and internal complement forces `(p_jt, q_jt)`.
pub fn complement_forces(params: &ComplementParams, frame: &ComplementFrame) -> (f64, f64) {
    let [i_pa, i_ro, i_rs] = params.interaction;
    let p = params.p0 + params.p1 * frame.pv + params.p2 * frame.av + i_pa * frame.pv * frame.av;
    let q = params.q0
        + params.q1 * frame.rtv
        + params.q2 * frame.ol
        + params.q3 * frame.stavg
        + i_ro * frame.rtv * frame.ol
        + i_rs * frame.rtv * frame.stavg;
    (p, q)
}

/// One-day platform increment `(p + q·m/M)(M - m)`.
pub fn platform_drift(m_prev: f64, p: f64, q: f64, potential: f64) -> Result<f64> {
    if !(potential > 0.0) {
        return Err(Error::NonPositivePotential { day: 0, value: potential });
    }
    Ok((p + q * m_prev / potential) * (potential - m_prev))
}

/// `d g / d m` for `g(m) = m + platform_drift(m)`.
pub fn platform_jacobian(m_prev: f64, p: f64, q: f64, potential: f64) -> Result<f64> {
    if !(potential > 0.0) {
        return Err(Error::NonPositivePotential { day: 0, value: potential });
    }
    Ok(1.0 + q - p - 2.0 * q * m_prev / potential)
}

fn complement_potential(m_prev: f64, alpha: f64) -> Result<f64> {
    let pot = alpha * m_prev;
    if pot > POTENTIAL_FLOOR {
        Ok(pot)
    } else {
        Err(Error::DegeneratePotential { value: pot })
    }
}

/// One-day complement increment, churn included.
pub fn complement_drift(n_prev: f64, m_prev: f64, p: f64, q: f64, alpha: f64, delta: f64) -> Result<f64> {
    let pot = complement_potential(m_prev, alpha)?;
    Ok((p + q * (1.0 - delta) * n_prev / pot) * (pot - n_prev) - delta * n_prev)
}

/// `d g / d n` for `g(n) = n + complement_drift(n)`.
pub fn complement_jacobian(n_prev: f64, m_prev: f64, p: f64, q: f64, alpha: f64, delta: f64) -> Result<f64> {
    let pot = complement_potential(m_prev, alpha)?;
    let qd = q * (1.0 - delta);
    Ok(1.0 + qd - p - delta - 2.0 * qd * n_prev / pot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn platform(p0: f64, beta: Vec<f64>, rho: Vec<f64>) -> PlatformParams {
        PlatformParams { p0, beta, rho, q: 0.0, m0: 1.0, kappa: 0.0, obs_var: 1.0, state_var: 1.0 }
    }

    #[test]
    fn potential_examples() {
        assert_eq!(market_potential(1.54e-2, 3.60e-2, 0.0).unwrap(), 1.54e-2);
        assert_relative_eq!(market_potential(1.54e-2, 3.60e-2, 1.0).unwrap(), 5.14e-2, max_relative = 1e-12);
        assert_eq!(market_potential(1.0, 0.0, 7.3).unwrap(), 1.0);
        assert!(matches!(market_potential(1.0, -2.0, 1.0), Err(Error::NonPositivePotential { .. })));
    }

    #[test]
    fn external_force_examples() {
        let frame = PlatformFrame { x: vec![0.3, -0.7], z: vec![1.1, 2.0], addons: 0.0 };
        let p = platform(1.76e-3, vec![0.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(platform_external_force(&p, &frame).unwrap(), 1.76e-3);

        let p = platform(0.0, vec![-4.91e-5, -5.66e-4], vec![0.0, 0.0]);
        let frame = PlatformFrame { x: vec![1.0, 1.0], z: vec![0.0, 0.0], addons: 0.0 };
        assert_relative_eq!(platform_external_force(&p, &frame).unwrap(), -6.151e-4, max_relative = 1e-12);

        let p = platform(0.0, vec![0.0, 0.0], vec![3.42e-5, 3.52e-5]);
        let frame = PlatformFrame { x: vec![0.0, 0.0], z: vec![2.0, 0.0], addons: 0.0 };
        assert_relative_eq!(platform_external_force(&p, &frame).unwrap(), 6.84e-5, max_relative = 1e-12);
    }

    #[test]
    fn external_force_dimension_mismatch() {
        let p = platform(0.0, vec![1.0], vec![0.0, 0.0]);
        let frame = PlatformFrame { x: vec![0.0, 0.0], z: vec![0.0, 0.0], addons: 0.0 };
        assert!(matches!(platform_external_force(&p, &frame), Err(Error::DimensionMismatch { what: "beta", .. })));
    }

    fn complement(p: [f64; 3], q: [f64; 4]) -> ComplementParams {
        ComplementParams {
            alpha: 0.5,
            delta: 0.1,
            p0: p[0],
            p1: p[1],
            p2: p[2],
            q0: q[0],
            q1: q[1],
            q2: q[2],
            q3: q[3],
            interaction: [0.0; 3],
            obs_var: 1.0,
            state_var: 1.0,
        }
    }

    #[test]
    fn complement_force_examples() {
        let c = complement([0.2, 0.0, 0.0], [0.3, 0.0, 0.0, 0.0]);
        let f = ComplementFrame { pv: 0.4, av: -1.0, rtv: 2.0, stavg: 0.1, ol: 0.7 };
        assert_eq!(complement_forces(&c, &f), (0.2, 0.3));

        let c = complement([0.0087, 0.0047, 0.0059], [0.0; 4]);
        let f = ComplementFrame { pv: 1.0, av: 1.0, ..Default::default() };
        assert_relative_eq!(complement_forces(&c, &f).0, 0.0193, max_relative = 1e-12);

        let c = complement([0.0; 3], [0.0057, 0.0131, 0.0, 0.0]);
        let f = ComplementFrame { rtv: -1.0, ..Default::default() };
        assert_relative_eq!(complement_forces(&c, &f).1, -0.0074, max_relative = 1e-12);
    }

    #[test]
    fn platform_drift_examples() {
        assert_eq!(platform_drift(100.0, 0.01, 0.1, 100.0).unwrap(), 0.0);
        assert_eq!(platform_drift(0.0, 0.0, 0.3, 100.0).unwrap(), 0.0);
        assert_relative_eq!(platform_drift(50.0, 0.01, 0.1, 100.0).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn complement_drift_examples() {
        // saturated, no churn
        assert_eq!(complement_drift(0.25, 0.5, 0.01, 0.2, 0.5, 0.0).unwrap(), 0.0);
        // pure churn
        assert_eq!(complement_drift(10.0, 100.0, 0.0, 0.0, 0.3, 0.5).unwrap(), -5.0);

        // hand evaluation at the default complement values
        let (p, q, a, d, m, n) = (0.0087, 0.0057, 0.0142, 0.0174, 1.0, 0.005);
        let pot = a * m; // 0.0142
        let expected = (p + q * (1.0 - d) * n / pot) * (pot - n) - d * n;
        // 0.0087 + 0.0057*0.9826*0.005/0.0142 = 0.0087 + 0.00197208...
        let hand = (0.0087 + 0.0057 * 0.9826 * (0.005 / 0.0142)) * 0.0092 - 0.0174 * 0.005;
        assert_relative_eq!(expected, hand, max_relative = 1e-12);
        assert_relative_eq!(complement_drift(n, m, p, q, a, d).unwrap(), hand, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_potential() {
        assert!(matches!(complement_drift(0.0, 0.0, 0.1, 0.1, 0.5, 0.1), Err(Error::DegeneratePotential { .. })));
        assert!(matches!(complement_jacobian(0.0, 1e-13, 0.1, 0.1, 0.5, 0.1), Err(Error::DegeneratePotential { .. })));
    }

    #[test]
    fn jacobian_closed_forms() {
        let (p, q, pot) = (0.02, 0.3, 10.0);
        assert_relative_eq!(platform_jacobian(0.0, p, q, pot).unwrap(), 1.0 + q - p);
        assert_relative_eq!(platform_jacobian(pot, p, q, pot).unwrap(), 1.0 - q - p);
        assert_relative_eq!(complement_jacobian(3.0, 10.0, 0.0, 0.0, 0.5, 0.2).unwrap(), 0.8);
        let (p, q, d) = (0.01, 0.2, 0.05);
        assert_relative_eq!(complement_jacobian(0.0, 10.0, p, q, 0.5, d).unwrap(), 1.0 + q * (1.0 - d) - p - d);
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1e-3);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn platform_jacobian_matches_finite_difference(
            m in 0.0f64..2.0, p in -0.01f64..0.05, q in 0.0f64..0.5, pot in 0.5f64..3.0,
        ) {
            let fd = central_diff(|x| x + platform_drift(x, p, q, pot).unwrap(), m);
            let j = platform_jacobian(m, p, q, pot).unwrap();
            prop_assert!((fd - j).abs() <= 1e-6 * j.abs().max(1e-3));
        }

        #[test]
        fn saturation_zeroes_drift(p in -0.1f64..0.1, q in 0.0f64..1.0, pot in 0.01f64..100.0,
                                   a in 0.01f64..0.99, m in 0.1f64..10.0) {
            prop_assert_eq!(platform_drift(pot, p, q, pot).unwrap(), 0.0);
            let d = complement_drift(a * m, m, p, q, a, 0.0).unwrap();
            prop_assert!(d.abs() <= 1e-15 * (a * m).max(1.0));
        }

        #[test]
        fn potential_is_affine(m0 in 0.1f64..10.0, k in 0.0f64..2.0, a1 in 0.0f64..5.0, a2 in 0.0f64..5.0) {
            let lhs = market_potential(m0, k, a1).unwrap() + market_potential(m0, k, a2).unwrap();
            let rhs = market_potential(m0, k, a1 + a2).unwrap() + m0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }

        #[test]
        fn deterministic_recursion_is_monotone_and_bounded(
            p in 1e-4f64..0.05, q in 0.0f64..0.3, pot in 1.0f64..100.0, frac in 0.0f64..0.9,
        ) {
            let mut m = frac * pot;
            for _ in 0..500 {
                let next = m + platform_drift(m, p, q, pot).unwrap();
                prop_assert!(next >= m);
                prop_assert!(next <= pot * (1.0 + 1e-12));
                m = next;
            }
        }
    }
}
