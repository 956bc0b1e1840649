//! Closed-form Gaussian-RBF embeddings of one-dimensional normal laws.
//!
//! For `k(x, y) = exp(-(x-y)^2 / (2 s^2))` and `X ~ N(mean, var)`,
//! `E k(X, q) = s / sqrt(s^2 + var) exp(-(q - mean)^2 / (2 (s^2 + var)))`, and
//! the inner product of two such embeddings is the same expression with the
//! variances added.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{rkhs_inner, Embedding, KernelFamily, KernelSpec};

/// A 1-D normal law `N(mean, variance)` viewed as a kernel mean embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianEmbedding {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianEmbedding {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) || !mean.is_finite() {
            return Err(Error::invalid("variance", format!("need finite mean and variance >= 0, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    /// Exact OU image of this law after `lag` with rate `alpha` and inverse
    /// temperature `beta_temp`.
    pub fn ou_transition(&self, lag: f64, alpha: f64, beta_temp: f64) -> Self {
        let decay = (-alpha * lag).exp();
        Self {
            mean: self.mean * decay,
            variance: self.variance * decay * decay - (-2.0 * alpha * lag).exp_m1() / (alpha * beta_temp),
        }
    }
}

fn bandwidth_sq(spec: &KernelSpec) -> f64 {
    match spec.family {
        KernelFamily::GaussianRbf => spec.bandwidth * spec.bandwidth,
    }
}

/// `int k(x, query) dN(mean, variance)(x)`.
pub fn gaussian_rbf_analytic_embedding(mean: f64, variance: f64, spec: &KernelSpec, query: f64) -> Result<f64> {
    let g = GaussianEmbedding::new(mean, variance)?;
    Ok(evaluate(&g, spec, query))
}

fn evaluate(g: &GaussianEmbedding, spec: &KernelSpec, query: f64) -> f64 {
    let s2 = bandwidth_sq(spec);
    let total = s2 + g.variance;
    (s2 / total).sqrt() * (-(query - g.mean).powi(2) / (2.0 * total)).exp()
}

/// `<N(m1, v1), N(m2, v2)>_H`.
pub fn gaussian_inner(a: &GaussianEmbedding, b: &GaussianEmbedding, spec: &KernelSpec) -> f64 {
    let s2 = bandwidth_sq(spec);
    let total = s2 + a.variance + b.variance;
    (s2 / total).sqrt() * (-(a.mean - b.mean).powi(2) / (2.0 * total)).exp()
}

/// `<mu, N(mean, var)>_H` for a 1-D empirical embedding.
pub fn inner_with_gaussian(mu: &Embedding, g: &GaussianEmbedding, spec: &KernelSpec) -> Result<f64> {
    crate::kernels::check_dims(1, mu.dim())?;
    let terms: Vec<f64> = (0..mu.len())
        .into_par_iter()
        .map(|i| mu.weights()[i] * evaluate(g, spec, mu.anchors().row(i)[0]))
        .collect();
    Ok(terms.iter().sum())
}

/// Above this many anchors `<mu, mu>` is evaluated by the fast Gauss
/// transform instead of the quadratic double sum.
const FAST_SELF_INNER_MIN: usize = 2048;

/// MMD between an empirical embedding and a Gaussian law.
pub fn mmd_to_gaussian(mu: &Embedding, g: &GaussianEmbedding, spec: &KernelSpec) -> Result<f64> {
    crate::kernels::check_dims(1, mu.dim())?;
    let self_term = if mu.len() >= FAST_SELF_INNER_MIN {
        crate::fgt::gauss_quadratic_form(mu.anchors().as_slice(), mu.weights().as_slice(), spec.bandwidth)
    } else {
        rkhs_inner(mu, mu, spec)?
    };
    let cross = inner_with_gaussian(mu, g, spec)?;
    let sq = self_term - 2.0 * cross + gaussian_inner(g, g, spec);
    Ok(sq.max(0.0).sqrt())
}
