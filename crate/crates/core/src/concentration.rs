//! Moment estimates for the cross-covariance operator and a Bernstein-type
//! bound on the operator estimation error, an analytic alternative to the
//! bootstrap for `F`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::sde::PairedDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimates {
    /// `M_2 = E[k(x,x) k(y,y)]`.
    pub m2_t: f64,
    /// `|C_YX|_HS`.
    pub hs_norm_cxy: f64,
    /// `sqrt(max(0, m2_t - hs_norm_cxy^2))`.
    pub sigma_t: f64,
    pub lag: f64,
}

impl MomentEstimates {
    pub fn estimate<K: Kernel>(data: &PairedDataset, kernel: &K) -> Self {
        let m2_t = estimate_second_moment(data, kernel);
        let hs_norm_cxy = estimate_hs_norm_cxy(data, kernel);
        Self {
            m2_t,
            hs_norm_cxy,
            sigma_t: (m2_t - hs_norm_cxy * hs_norm_cxy).max(0.0).sqrt(),
            lag: data.lag,
        }
    }

    /// Same estimates with every `y_i` replaced by `x_i` (the lag-zero
    /// moments entering `sigma_0`).
    pub fn estimate_lag_zero<K: Kernel>(data: &PairedDataset, kernel: &K) -> Self {
        let diagonal = PairedDataset {
            x: data.x.clone(),
            y: data.x.clone(),
            lag: data.lag,
            seed: data.seed,
        };
        let mut est = Self::estimate(&diagonal, kernel);
        est.lag = 0.0;
        est
    }
}

/// `(1/m) sum_i k(x_i, x_i) k(y_i, y_i)`.
pub fn estimate_second_moment<K: Kernel>(data: &PairedDataset, kernel: &K) -> f64 {
    let m = data.len() as f64;
    data.x
        .rows()
        .zip(data.y.rows())
        .map(|(x, y)| kernel.eval(x, x) * kernel.eval(y, y))
        .sum::<f64>()
        / m
}

/// `sqrt((1/m^2) sum_ij k(x_i, x_j) k(y_i, y_j))`, a V-statistic.
///
/// Row sums are computed in parallel and then added in row order, so the
/// value is independent of the thread count.
pub fn estimate_hs_norm_cxy<K: Kernel>(data: &PairedDataset, kernel: &K) -> f64 {
    hs_double_sum(data, kernel).max(0.0).sqrt()
}

fn hs_double_sum<K: Kernel>(data: &PairedDataset, kernel: &K) -> f64 {
    let m = data.len();
    let rows: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let (xi, yi) = (data.x.row(i), data.y.row(i));
            (0..m).map(|j| kernel.eval(xi, data.x.row(j)) * kernel.eval(yi, data.y.row(j))).sum()
        })
        .collect();
    rows.iter().sum::<f64>() / (m as f64 * m as f64)
}

/// Unclamped `M_2 - |C_YX|_HS^2`; small negative values are round-off.
pub fn sigma_t_squared_unclamped<K: Kernel>(data: &PairedDataset, kernel: &K) -> f64 {
    estimate_second_moment(data, kernel) - hs_double_sum(data, kernel)
}

/// Spectral-gap envelope for the second moment:
/// `|Phi_1|_1^2 + exp(-2 R t / beta_temp) |P_0 Phi_1|_2^2`.
pub fn poincare_envelope_m2(t: f64, r: f64, beta_temp: f64, phi1_l1: f64, phi1_centered_l2: f64) -> f64 {
    phi1_l1 * phi1_l1 + (-2.0 * r * t / beta_temp).exp() * phi1_centered_l2 * phi1_centered_l2
}

/// The analogous envelope for `|C_YX|_HS^2`:
/// `|k|_1^2 + exp(-2 R t / beta_temp) |P_{0,2} k|_2^2`.
pub fn poincare_envelope_hs(t: f64, r: f64, beta_temp: f64, k_l1: f64, k_centered_l2: f64) -> f64 {
    poincare_envelope_m2(t, r, beta_temp, k_l1, k_centered_l2)
}

/// Inputs of [`bernstein_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinInputs {
    pub lambda: f64,
    pub m: usize,
    /// Failure probability; the bound holds with probability `1 - 2 delta`.
    pub delta_conf: f64,
    pub sigma_t: f64,
    pub sigma_0: f64,
    pub hs_norm_cyx: f64,
    /// Moment constant; 1.0 suffices for kernels bounded by one.
    pub l: f64,
}

/// Default moment constant for the Gaussian RBF kernel, whose diagonal is one.
pub const RBF_MOMENT_CONSTANT: f64 = 1.0;

/// `(2 / (lambda sqrt m)) log(2/delta) [sigma_t + (h/lambda) sigma_0 + (1 + h/lambda) L / sqrt m]`
/// with `h = |C_YX|_HS`.
pub fn bernstein_bound(p: &BernsteinInputs) -> Result<f64> {
    if !(p.delta_conf > 0.0 && p.delta_conf < 1.0) {
        return Err(Error::invalid("delta_conf", format!("must lie in (0, 1), got {}", p.delta_conf)));
    }
    if p.lambda.is_nan() || p.lambda <= 0.0 {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    if p.m == 0 {
        return Err(Error::invalid("m", "must be positive"));
    }
    for (name, v) in [("sigma_t", p.sigma_t), ("sigma_0", p.sigma_0), ("hs_norm_cyx", p.hs_norm_cyx), ("l", p.l)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, format!("must be finite and nonnegative, got {v}")));
        }
    }
    let sqrt_m = (p.m as f64).sqrt();
    let ratio = p.hs_norm_cyx / p.lambda;
    let bracket = p.sigma_t + ratio * p.sigma_0 + (1.0 + ratio) * p.l / sqrt_m;
    Ok(2.0 / (p.lambda * sqrt_m) * (2.0 / p.delta_conf).ln() * bracket)
}
