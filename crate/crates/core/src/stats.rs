//! Small statistical helpers shared by the samplers: conjugate Gaussian
//! regression, inverse-gamma / inverse-Wishart draws, posterior summaries.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

pub fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// Density of a logit-normal variable on the natural (0,1) scale.
pub fn logit_normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    normal_logpdf(logit(x), mean, var) - (x * (1.0 - x)).ln()
}

/// Draw from IG(shape, scale), density proportional to `x^{-shape-1} exp(-scale/x)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("valid gamma parameters");
    1.0 / g.sample(rng)
}

/// Inverse-gamma prior on a variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }

    /// Log density up to its normalizing constant.
    pub fn log_kernel(&self, x: f64) -> f64 {
        if x > 0.0 {
            -(self.shape + 1.0) * x.ln() - self.scale / x
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Conjugate posterior draw given `n` residuals with sum of squares `ss`.
    pub fn posterior_draw<R: Rng + ?Sized>(&self, n: usize, ss: f64, rng: &mut R) -> f64 {
        sample_inverse_gamma(self.shape + 0.5 * n as f64, self.scale + 0.5 * ss, rng)
    }
}

/// Gaussian prior on a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normal {
    pub mean: f64,
    pub var: f64,
}

impl Normal {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        normal_logpdf(x, self.mean, self.var)
    }
}

/// Accumulates `X'X`, `X'r`, `r'r` for a regression with a known noise variance.
#[derive(Debug, Clone)]
pub struct RegressionStats {
    pub xtx: DMatrix<f64>,
    pub xtr: DVector<f64>,
    pub rtr: f64,
    pub n: usize,
}

impl RegressionStats {
    pub fn new(k: usize) -> Self {
        Self { xtx: DMatrix::zeros(k, k), xtr: DVector::zeros(k), rtr: 0.0, n: 0 }
    }

    pub fn dim(&self) -> usize {
        self.xtr.len()
    }

    pub fn push(&mut self, x: &[f64], r: f64) {
        let k = x.len();
        debug_assert_eq!(k, self.dim());
        for i in 0..k {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            self.xtr[i] += xi * r;
            for j in 0..=i {
                self.xtx[(i, j)] += xi * x[j];
            }
        }
        self.rtr += r * r;
        self.n += 1;
    }

    fn symmetrize(&mut self) {
        let k = self.dim();
        for i in 0..k {
            for j in 0..i {
                self.xtx[(j, i)] = self.xtx[(i, j)];
            }
        }
    }

    /// Posterior of the coefficients under independent Gaussian priors and
    /// noise variance `noise_var`.
    pub fn posterior(mut self, prior: &[Normal], noise_var: f64) -> Result<GaussianPosterior> {
        self.symmetrize();
        let k = self.dim();
        if prior.len() != k {
            return Err(Error::DimensionMismatch { what: "regression prior", expected: k, got: prior.len() });
        }
        let mut precision = &self.xtx / noise_var;
        let mut rhs = &self.xtr / noise_var;
        let mut prior_quad = 0.0;
        let mut log_det_prior = 0.0;
        for (i, p) in prior.iter().enumerate() {
            if !(p.var > 0.0) {
                return Err(Error::PriorMisconfiguration(format!("prior variance {} <= 0", p.var)));
            }
            precision[(i, i)] += 1.0 / p.var;
            rhs[i] += p.mean / p.var;
            prior_quad += p.mean * p.mean / p.var;
            log_det_prior += p.var.ln();
        }
        // Jacobi scaling keeps the factorization stable when regressors
        // differ by many orders of magnitude
        let scale = precision.diagonal().map(f64::sqrt);
        let scaled = DMatrix::from_fn(k, k, |i, j| precision[(i, j)] / (scale[i] * scale[j]));
        let chol = Cholesky::new(scaled).ok_or(Error::RankDeficientDesign { rows: self.n, cols: k })?;
        let mean = chol.solve(&rhs.component_div(&scale)).component_div(&scale);
        let log_det_post_prec: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
            + 2.0 * scale.iter().map(|s| s.ln()).sum::<f64>();
        // log p(r) with the coefficients integrated out
        let quad = self.rtr / noise_var + prior_quad - mean.dot(&rhs);
        let log_marginal = -0.5
            * (self.n as f64 * (2.0 * std::f64::consts::PI * noise_var).ln()
                + log_det_prior
                + log_det_post_prec
                + quad);
        Ok(GaussianPosterior { mean, chol, scale, log_marginal })
    }
}

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    /// Cholesky factor of the Jacobi-scaled posterior precision
    /// `S^-1 P S^-1` with `S = diag(scale)`.
    pub chol: Cholesky<f64, Dyn>,
    pub scale: DVector<f64>,
    pub log_marginal: f64,
}

impl GaussianPosterior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.mean.len();
        let z = DVector::from_fn(k, |_, _| std_normal(rng));
        // scaled precision = L L', so S^-1 L'^-1 z has covariance precision^-1
        let lt = self.chol.l().transpose();
        let x = lt.solve_upper_triangular(&z).expect("cholesky factor is nonsingular");
        &self.mean + x.component_div(&self.scale)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        let k = self.scale.len();
        DMatrix::from_fn(k, k, |i, j| inv[(i, j)] / (self.scale[i] * self.scale[j]))
    }
}

/// Inverse-Wishart draw with `df` degrees of freedom and scale matrix `scale`
/// (Bartlett decomposition of the Wishart on the inverse scale).
pub fn sample_inverse_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    let inv_scale = scale.clone().try_inverse().ok_or(Error::RankDeficientDesign { rows: p, cols: p })?;
    let chol = Cholesky::new(inv_scale).ok_or(Error::RankDeficientDesign { rows: p, cols: p })?;
    let l = chol.l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("valid chi-squared dof");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    let la = l * a;
    let wishart = &la * la.transpose();
    wishart.try_inverse().ok_or(Error::RankDeficientDesign { rows: p, cols: p })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` in the denominator.
pub fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_var(xs).sqrt()
}

/// Linear-interpolation quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior summary in the estimate / sd / 2.5th / 97.5th layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub estimate: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl PosteriorSummary {
    pub fn from_draws(draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InsufficientDraws("no draws to summarize".into()));
        }
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        let estimate = mean(draws);
        let sd = if draws.iter().all(|&d| d == draws[0]) { 0.0 } else { sample_sd(draws) };
        Ok(Self { estimate, sd, q025: quantile_sorted(&sorted, 0.025), q975: quantile_sorted(&sorted, 0.975) })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }

    /// Interval excludes zero.
    pub fn significant(&self) -> bool {
        self.q025 > 0.0 || self.q975 < 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_inverts_logit() {
        for &x in &[1e-6, 0.0142, 0.5, 0.9, 1.0 - 1e-9] {
            assert_relative_eq!(logistic(logit(x)), x, max_relative = 1e-9);
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let xs: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(quantile_sorted(&xs, 0.5), 5.0);
        assert_relative_eq!(quantile_sorted(&xs, 0.025), 0.25);
    }

    #[test]
    fn constant_draws_have_zero_sd() {
        let s = PosteriorSummary::from_draws(&[0.1; 50]).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.q025, 0.1);
    }

    #[test]
    fn regression_matches_closed_form_scalar() {
        // r = b x + e, prior b ~ N(m0, v0): posterior precision 1/v0 + sum x^2 / s2
        let xs = [1.0, 2.0, -1.0, 0.5];
        let rs = [0.9, 2.2, -1.1, 0.4];
        let (m0, v0, s2) = (0.3, 4.0, 0.25);
        let mut st = RegressionStats::new(1);
        for (x, r) in xs.iter().zip(&rs) {
            st.push(&[*x], *r);
        }
        let post = st.posterior(&[Normal::new(m0, v0)], s2).unwrap();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxr: f64 = xs.iter().zip(&rs).map(|(x, r)| x * r).sum();
        let prec = 1.0 / v0 + sxx / s2;
        assert_relative_eq!(post.mean[0], (m0 / v0 + sxr / s2) / prec, max_relative = 1e-12);
        assert_relative_eq!(post.covariance()[(0, 0)], 1.0 / prec, max_relative = 1e-12);

        // marginal: r ~ N(m0 x, s2 I + v0 x x')
        let n = xs.len();
        let cov = DMatrix::from_fn(n, n, |i, j| v0 * xs[i] * xs[j] + if i == j { s2 } else { 0.0 });
        let resid = DVector::from_fn(n, |i, _| rs[i] - m0 * xs[i]);
        let chol = Cholesky::new(cov.clone()).unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = resid.dot(&chol.solve(&resid));
        let expected = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
        assert_relative_eq!(post.log_marginal, expected, max_relative = 1e-10);
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ig = InverseGamma::new(5.0, 2.0);
        let n = 40_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_inverse_gamma(5.0, 2.0, &mut rng)).collect();
        let se = (sample_var(&draws) / n as f64).sqrt();
        assert!((mean(&draws) - ig.mean()).abs() < 4.0 * se);
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let df = 8.0;
        let n = 20_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += sample_inverse_wishart(df, &scale, &mut rng).unwrap();
        }
        acc /= n as f64;
        let expected = &scale / (df - 2.0 - 1.0);
        for i in 0..2 {
            for j in 0..2 {
                assert!((acc[(i, j)] - expected[(i, j)]).abs() < 0.03, "{acc}");
            }
        }
    }
}
