//! Bootstrap quantile of the operator estimation error.
//!
//! Each replicate resamples the training pairs with replacement, refits the
//! operator and records its RKHS operator-norm distance to the base fit. The
//! `(1 - alpha)` empirical quantile of these deviations estimates `delta` with
//! `P(|P_hat - P| <= delta) >= 1 - alpha`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::operator::{FittedOperator, ResampleDeviation};
use crate::rng;
use crate::sde::PairedDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    /// Sorted, nondecreasing.
    pub deviations: Vec<f64>,
    pub quantile_delta: f64,
    pub confidence_alpha: f64,
    pub seed: u64,
    /// Training-set size.
    pub m: usize,
}

impl BootstrapSummary {
    pub fn replicates(&self) -> usize {
        self.deviations.len()
    }

    /// The `(1 - alpha)` quantile of the stored deviations.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        Ok(self.deviations[quantile_index(self.deviations.len(), alpha)])
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// 0-based position of `Delta[ceil(m_b (1 - alpha))]` (1-based) in a sorted
/// vector of `m_b` deviations. Products within 1e-9 of an integer are taken
/// as that integer so that e.g. `200 * 0.95` maps to 190.
pub fn quantile_index(m_b: usize, alpha: f64) -> usize {
    let q = m_b as f64 * (1.0 - alpha);
    let nearest = q.round();
    let rank = if (q - nearest).abs() < 1e-9 { nearest } else { q.ceil() };
    (rank as usize).clamp(1, m_b) - 1
}

/// Fit the base operator on `data` and bootstrap its deviation quantile.
pub fn bootstrap_deviation_quantile(
    data: &PairedDataset,
    lambda: f64,
    spec: KernelSpec,
    m_b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    let base = FittedOperator::fit(data, lambda, spec)?;
    bootstrap_operator(&base, m_b, alpha, seed)
}

/// Bootstrap around an already fitted operator.
///
/// Replicate `j` draws its indices from its own substream of `seed`, and
/// results are gathered in replicate order, so the output does not depend
/// on the number of worker threads.
pub fn bootstrap_operator(base: &FittedOperator, m_b: usize, alpha: f64, seed: u64) -> Result<BootstrapSummary> {
    if m_b == 0 {
        return Err(Error::invalid("m_b", "need at least one bootstrap replicate"));
    }
    check_alpha(alpha)?;
    let m = base.m();
    let deviation = ResampleDeviation::new(base);
    let mut deviations = (0..m_b)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::substream(seed, rng::domain::BOOTSTRAP, j as u64);
            let indices: Vec<usize> = (0..m).map(|_| r.random_range(0..m)).collect();
            deviation.deviation(&indices)
        })
        .collect::<Result<Vec<f64>>>()?;
    deviations.sort_by(f64::total_cmp);
    let quantile_delta = deviations[quantile_index(m_b, alpha)];
    Ok(BootstrapSummary {
        deviations,
        quantile_delta,
        confidence_alpha: alpha,
        seed,
        m,
    })
}
