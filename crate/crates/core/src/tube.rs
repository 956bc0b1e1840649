//! Multistep MMD ambiguity tubes.
//!
//! Starting from an initial embedding and radius `rho_0`, each step pushes
//! the center forward with the learned operator and grows the radius by
//!
//! ```text
//! rho_{i+1} = F (|q_i|_H + rho_i) + E rho_i
//! ```
//!
//! where `E` is the norm of the learned operator and `F` bounds its
//! estimation error.

use crate::error::{Error, Result};
use crate::kernels::{rkhs_norm, Embedding};
use crate::operator::{FittedOperator, OperatorNorms};

#[derive(Debug, Clone, PartialEq)]
pub struct TubeStep {
    pub embedding: Embedding,
    pub radius: f64,
    /// `|embedding|_H`.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityTube {
    pub steps: Vec<TubeStep>,
    pub norms: OperatorNorms,
}

impl AmbiguityTube {
    /// Number of propagation steps `T`; `steps.len() == T + 1`.
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn radii(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.radius).collect()
    }

    pub fn embedding_norms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.norm).collect()
    }
}

/// One radius update.
#[inline]
pub fn next_radius(norms: &OperatorNorms, embedding_norm: f64, radius: f64) -> f64 {
    norms.f_norm * (embedding_norm + radius) + norms.e_norm * radius
}

fn check_rho0(rho0: f64) -> Result<()> {
    if rho0 >= 0.0 && rho0.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("rho0", format!("must be finite and nonnegative, got {rho0}")))
    }
}

/// Propagate `initial` for `horizon` steps. `norms` is evaluated once by the
/// caller (typically `E = op.operator_norm()` and `F` from the bootstrap).
pub fn propagate_tube(
    op: &FittedOperator,
    initial: &Embedding,
    rho0: f64,
    horizon: usize,
    norms: OperatorNorms,
) -> Result<AmbiguityTube> {
    check_rho0(rho0)?;
    if horizon == 0 {
        return Err(Error::invalid("T", "horizon must be at least 1"));
    }
    let spec = *op.spec();
    let mut steps = Vec::with_capacity(horizon + 1);
    steps.push(TubeStep {
        embedding: initial.clone(),
        radius: rho0,
        norm: rkhs_norm(initial, &spec),
    });
    for _ in 0..horizon {
        let prev = steps.last().expect("tube has a first step");
        let embedding = op.pushforward(&prev.embedding)?;
        let radius = next_radius(&norms, prev.norm, prev.radius);
        let norm = rkhs_norm(&embedding, &spec);
        steps.push(TubeStep { embedding, radius, norm });
    }
    Ok(AmbiguityTube { steps, norms })
}

/// Run the radius recursion alone on a given sequence of center norms
/// `|q_0|, ..., |q_{T-1}|`, returning `rho_0, ..., rho_T`.
pub fn radius_recursion(norms: &OperatorNorms, rho0: f64, center_norms: &[f64]) -> Result<Vec<f64>> {
    check_rho0(rho0)?;
    let mut radii = Vec::with_capacity(center_norms.len() + 1);
    radii.push(rho0);
    for &n in center_norms {
        let r = *radii.last().expect("non-empty");
        radii.push(next_radius(norms, n, r));
    }
    Ok(radii)
}

/// Closed-form radius after `T` steps, the exact unrolling of the recursion:
/// `(E+F)^T rho_0 + sum_{i=0}^{T-1} (E+F)^i F |q_{T-1-i}|`.
pub fn closed_form_bound_computable(e: f64, f: f64, rho0: f64, empirical_norms: &[f64], horizon: usize) -> Result<f64> {
    if empirical_norms.len() < horizon {
        return Err(Error::LengthMismatch {
            what: "empirical norms vs horizon",
            left: empirical_norms.len(),
            right: horizon,
        });
    }
    let g = e + f;
    // Repeated multiplication, not `powi`, so that with `F = 0` the value is
    // bit-identical to running the recursion.
    let mut total = (0..horizon).fold(rho0, |acc, _| g * acc);
    let mut pow = 1.0;
    for i in 0..horizon {
        total += pow * f * empirical_norms[horizon - 1 - i];
        pow *= g;
    }
    Ok(total)
}

/// Bound in terms of the true embedded norms `|E p_t|`, summed over
/// `i = 1..T-1` as stated for the idealized setting:
/// `E^T mmd_0 + sum_{i=1}^{T-1} E^i F |E p_{T-i-1}|`. The norms are not
/// read when `F = 0`.
pub fn closed_form_bound_oracle(e: f64, f: f64, mmd0: f64, true_norms: &[f64], horizon: usize) -> Result<f64> {
    if f != 0.0 && true_norms.len() + 1 < horizon {
        return Err(Error::LengthMismatch {
            what: "true norms vs horizon",
            left: true_norms.len(),
            right: horizon,
        });
    }
    let mut total = (0..horizon).fold(mmd0, |acc, _| e * acc);
    if f == 0.0 {
        return Ok(total);
    }
    for i in 1..horizon {
        total += e.powi(i as i32) * f * true_norms[horizon - i - 1];
    }
    Ok(total)
}
