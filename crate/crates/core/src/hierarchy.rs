//! Hierarchical layer: each complement's parameter vector regressed on its
//! business-model / license dummies.
//!
//! The sampler works with `phi_j = (logit alpha_j, logit delta_j, p0j, p1j,
//! p2j, q0j, q1j, q2j, q3j)` so that the Gaussian layer respects the (0,1)
//! bounds of alpha and delta. Each coordinate gets its own normal-inverse-gamma
//! regression, i.e. the residual covariance is diagonal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HierarchyDesign, THETA_DIM};
use crate::stats::{sample_inverse_gamma, std_normal, InverseGamma};

/// Number of logit-scale coordinates at the front of `phi`.
pub const LOGIT_COORDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    /// Prior mean of the intercept for logit(alpha), logit(delta).
    pub logit_mean: f64,
    /// Prior mean of the intercept for the force coefficients.
    pub coef_mean: f64,
    /// `eta | sigma² ~ N(b0, sigma²·V0·I)`: V0 for the logit coordinates.
    pub logit_scale: f64,
    /// V0 for the force coefficients.
    pub coef_scale: f64,
    /// Prior on each residual variance.
    pub residual: InverseGamma,
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self {
            logit_mean: -4.0,
            coef_mean: 0.0,
            logit_scale: 16.0,
            coef_scale: 400.0,
            residual: InverseGamma::new(3.0, crate::sampler::DEFAULT_VARIANCE_SCALE),
        }
    }
}

impl HyperPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.logit_scale > 0.0 && self.coef_scale > 0.0) {
            return Err(Error::PriorMisconfiguration("hyperprior scales must be > 0".into()));
        }
        if !(self.residual.shape > 1.0 && self.residual.scale > 0.0) {
            return Err(Error::PriorMisconfiguration("hierarchy residual prior needs shape > 1, scale > 0".into()));
        }
        Ok(())
    }
}

fn check_rank(xtx: &DMatrix<f64>, rows: usize) -> Result<()> {
    let cols = xtx.ncols();
    let eig = xtx.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if rows <= cols || !(max > 0.0) || min <= 1e-10 * max {
        return Err(Error::RankDeficientDesign { rows, cols });
    }
    Ok(())
}

/// One conjugate draw of `(eta, residual variances)` given the parameter
/// vectors `phi` (J rows) and the design `d` (J rows, intercept first).
///
/// Coordinates with `explained[k] == false` are regressed on the intercept
/// only; coordinates with `active[k] == false` are left at zero.
pub fn sample_hierarchy<R: Rng + ?Sized>(
    phi: &[[f64; THETA_DIM]],
    d: &[Vec<f64>],
    hyper: &HyperPrior,
    explained: &[bool; THETA_DIM],
    active: &[bool; THETA_DIM],
    rng: &mut R,
) -> Result<HierarchyDesign> {
    let j = phi.len();
    if d.len() != j {
        return Err(Error::DimensionMismatch { what: "hierarchy design rows", expected: j, got: d.len() });
    }
    let k = d.first().map_or(0, Vec::len);
    if d.iter().any(|row| row.len() != k) || k == 0 {
        return Err(Error::DimensionMismatch { what: "hierarchy design columns", expected: k.max(1), got: 0 });
    }
    let full = DMatrix::from_fn(j, k, |r, c| d[r][c]);
    let ones = DMatrix::from_element(j, 1, 1.0);
    check_rank(&(full.transpose() * &full), j)?;

    let mut eta = vec![[0.0; THETA_DIM]; k];
    let mut residual_var = [0.0; THETA_DIM];
    for coord in 0..THETA_DIM {
        if !active[coord] {
            continue;
        }
        let x = if explained[coord] { &full } else { &ones };
        let kk = x.ncols();
        let (b0_int, v0) = if coord < LOGIT_COORDS {
            (hyper.logit_mean, hyper.logit_scale)
        } else {
            (hyper.coef_mean, hyper.coef_scale)
        };
        let mut b0 = DVector::zeros(kk);
        b0[0] = b0_int;
        let y = DVector::from_fn(j, |r, _| phi[r][coord]);
        let xtx = x.transpose() * x;
        let prec = &xtx + DMatrix::identity(kk, kk) / v0;
        let chol = prec.cholesky().ok_or(Error::RankDeficientDesign { rows: j, cols: kk })?;
        let rhs = x.transpose() * &y + &b0 / v0;
        let bn = chol.solve(&rhs);
        let ss = y.dot(&y) + b0.dot(&b0) / v0 - bn.dot(&rhs);
        let shape = hyper.residual.shape + 0.5 * j as f64;
        let scale = hyper.residual.scale + 0.5 * ss.max(0.0);
        let sigma2 = sample_inverse_gamma(shape, scale, rng);
        // beta = bn + sqrt(sigma2)·L'^-1 z
        let z = DVector::from_fn(kk, |_, _| std_normal(rng));
        let dev = chol.l().transpose().solve_upper_triangular(&z).expect("cholesky factor is nonsingular");
        let beta = bn + dev * sigma2.sqrt();
        for (row, b) in beta.iter().enumerate() {
            eta[row][coord] = *b;
        }
        residual_var[coord] = sigma2;
    }
    Ok(HierarchyDesign { dummies: d.to_vec(), eta, residual_var })
}
