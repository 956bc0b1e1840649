//! Paired lag-time samples from SDE models.
//!
//! Ornstein-Uhlenbeck pairs are drawn from the exact Gaussian transition;
//! other drifts are integrated with Euler-Maruyama.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::PointSet;
use crate::rng::{self, StreamRng};

pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Separable polynomial potential `V(x) = sum_d sum_k coeffs[k] * x_d^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub coeffs: Vec<f64>,
}

impl Potential {
    /// `(x^2 - 1)^2`.
    pub fn double_well() -> Self {
        Self {
            coeffs: vec![1.0, 0.0, -2.0, 0.0, 1.0],
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|&xi| self.coeffs.iter().rev().fold(0.0, |acc, c| acc * xi + c))
            .sum()
    }

    fn derivative(&self, xi: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * xi + k as f64 * c)
    }
}

#[derive(Clone)]
pub enum Drift {
    /// `-alpha x`.
    OrnsteinUhlenbeck { alpha: f64 },
    /// `-grad V(x)`.
    Gradient(Potential),
    Custom(DriftFn),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::OrnsteinUhlenbeck { alpha } => f.debug_struct("OrnsteinUhlenbeck").field("alpha", alpha).finish(),
            Drift::Gradient(p) => f.debug_tuple("Gradient").field(p).finish(),
            Drift::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `dX = drift(X) dt + diffusion_const dW`.
#[derive(Debug, Clone)]
pub struct SdeModel {
    name: String,
    drift: Drift,
    diffusion_const: f64,
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

impl SdeModel {
    /// `dX = -alpha X dt + sqrt(2 / beta_temp) dW`.
    pub fn ornstein_uhlenbeck(alpha: f64, beta_temp: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("beta_temp", beta_temp)?;
        Ok(Self {
            name: "ou".into(),
            drift: Drift::OrnsteinUhlenbeck { alpha },
            diffusion_const: (2.0 / beta_temp).sqrt(),
        })
    }

    /// Overdamped Langevin dynamics `dX = -grad V dt + sqrt(2 / beta_temp) dW`.
    pub fn langevin(potential: Potential, beta_temp: f64) -> Result<Self> {
        positive("beta_temp", beta_temp)?;
        if potential.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("potential", "coefficients must be finite"));
        }
        Ok(Self {
            name: "langevin".into(),
            drift: Drift::Gradient(potential),
            diffusion_const: (2.0 / beta_temp).sqrt(),
        })
    }

    /// Arbitrary drift. A zero diffusion constant gives deterministic Euler steps.
    pub fn custom(name: impl Into<String>, drift: DriftFn, diffusion_const: f64) -> Result<Self> {
        if !(diffusion_const >= 0.0 && diffusion_const.is_finite()) {
            return Err(Error::invalid(
                "diffusion_const",
                format!("must be nonnegative and finite, got {diffusion_const}"),
            ));
        }
        Ok(Self {
            name: name.into(),
            drift: Drift::Custom(drift),
            diffusion_const,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn diffusion_const(&self) -> f64 {
        self.diffusion_const
    }

    pub fn drift_kind(&self) -> &Drift {
        &self.drift
    }

    /// `(alpha, beta_temp)` when this is an Ornstein-Uhlenbeck model.
    pub fn ou_parameters(&self) -> Option<(f64, f64)> {
        match self.drift {
            Drift::OrnsteinUhlenbeck { alpha } => {
                Some((alpha, 2.0 / (self.diffusion_const * self.diffusion_const)))
            }
            _ => None,
        }
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::OrnsteinUhlenbeck { alpha } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -alpha * xi;
                }
            }
            Drift::Gradient(p) => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -p.derivative(*xi);
                }
            }
            Drift::Custom(f) => f(x, out),
        }
    }
}

/// One draw from the exact OU transition
/// `N(x0 e^{-alpha lag}, (1 - e^{-2 alpha lag}) / (alpha beta_temp))`.
pub fn ou_exact_step<R: Rng + ?Sized>(x0: f64, lag: f64, alpha: f64, beta_temp: f64, rng: &mut R) -> Result<f64> {
    positive("lag", lag)?;
    positive("alpha", alpha)?;
    positive("beta_temp", beta_temp)?;
    Ok(ou_step_unchecked(x0, lag, alpha, beta_temp, rng))
}

fn ou_step_unchecked<R: Rng + ?Sized>(x0: f64, lag: f64, alpha: f64, beta_temp: f64, rng: &mut R) -> f64 {
    let mean = x0 * (-alpha * lag).exp();
    let var = -(-2.0 * alpha * lag).exp_m1() / (alpha * beta_temp);
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// Euler-Maruyama path of `steps + 1` states starting at `x0`.
pub fn euler_maruyama<R: Rng + ?Sized>(
    model: &SdeModel,
    x0: &[f64],
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<PointSet> {
    positive("dt", dt)?;
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    let d = x0.len();
    let mut path = Vec::with_capacity((steps + 1) * d);
    path.extend_from_slice(x0);
    let mut state = x0.to_vec();
    let mut drift = vec![0.0; d];
    for step in 0..steps {
        em_step(model, &mut state, &mut drift, dt, step, rng)?;
        path.extend_from_slice(&state);
    }
    PointSet::new(path, d)
}

fn em_step<R: Rng + ?Sized>(
    model: &SdeModel,
    state: &mut [f64],
    drift: &mut [f64],
    dt: f64,
    step: usize,
    rng: &mut R,
) -> Result<()> {
    model.drift(state, drift);
    if drift.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDrift { step });
    }
    let scale = model.diffusion_const * dt.sqrt();
    for (s, b) in state.iter_mut().zip(drift.iter()) {
        let z: f64 = StandardNormal.sample(rng);
        *s += b * dt + scale * z;
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDrift { step });
    }
    Ok(())
}

/// Per-coordinate i.i.d. initial-state distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    Gaussian { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
    Point { value: f64 },
}

impl InitialDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialDistribution::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(variance >= 0.0 && variance.is_finite()) {
                    return Err(Error::invalid("initial", "gaussian needs finite mean and variance >= 0"));
                }
            }
            InitialDistribution::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::invalid("initial", "uniform needs finite low < high"));
                }
            }
            InitialDistribution::Point { value } => {
                if !value.is_finite() {
                    return Err(Error::invalid("initial", "point value must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        (0..dim)
            .map(|_| match *self {
                InitialDistribution::Gaussian { mean, variance } => {
                    let z: f64 = StandardNormal.sample(rng);
                    mean + variance.sqrt() * z
                }
                InitialDistribution::Uniform { low, high } => rng.random_range(low..high),
                InitialDistribution::Point { value } => value,
            })
            .collect()
    }

    /// `n` independent draws under stream `(seed, domain)`.
    pub fn sample_points(&self, dim: usize, n: usize, seed: u64, domain: u64) -> Result<PointSet> {
        self.validate()?;
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut r = rng::substream(seed, domain, i as u64);
                self.sample(dim, &mut r)
            })
            .collect();
        PointSet::new(data, dim)
    }
}

/// Pairs `(x_i, y_i)` where `y_i` is reached from `x_i` after `lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub x: Arc<PointSet>,
    pub y: Arc<PointSet>,
    pub lag: f64,
    pub seed: u64,
}

impl PairedDataset {
    pub fn new(x: PointSet, y: PointSet, lag: f64, seed: u64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "dataset x vs y",
                left: x.len(),
                right: y.len(),
            });
        }
        crate::kernels::check_dims(x.dim(), y.dim())?;
        positive("lag", lag)?;
        Ok(Self {
            x: Arc::new(x),
            y: Arc::new(y),
            lag,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Pairs at `indices`, kept jointly.
    pub fn select(&self, indices: &[usize]) -> PairedDataset {
        PairedDataset {
            x: Arc::new(self.x.select(indices)),
            y: Arc::new(self.y.select(indices)),
            lag: self.lag,
            seed: self.seed,
        }
    }
}

/// Simulation settings for [`simulate_pairs`].
#[derive(Debug, Clone)]
pub struct PairSimulation<'a> {
    pub model: &'a SdeModel,
    pub initial: &'a InitialDistribution,
    pub dim: usize,
    pub lag: f64,
    pub m: usize,
    /// Euler-Maruyama step; unused for exact OU transitions.
    pub dt: f64,
    pub seed: u64,
}

/// Draw `m` independent pairs. Pair `i` uses its own random substream, so the
/// dataset is reproducible for a fixed seed irrespective of scheduling.
///
/// Non-OU models take `ceil(lag / dt)` Euler-Maruyama steps of size
/// `lag / ceil(lag / dt)`, landing exactly on the lag time.
pub fn simulate_pairs(sim: &PairSimulation<'_>) -> Result<PairedDataset> {
    simulate_pairs_in_domain(sim, rng::domain::PAIRS)
}

/// [`simulate_pairs`] drawing from the substreams of another domain, for
/// samples that must be independent of a training set with the same seed.
pub fn simulate_pairs_in_domain(sim: &PairSimulation<'_>, domain: u64) -> Result<PairedDataset> {
    if sim.m < 2 {
        return Err(Error::invalid("m", format!("need at least 2 pairs, got {}", sim.m)));
    }
    if sim.dim == 0 {
        return Err(Error::invalid("dim", "must be at least 1"));
    }
    positive("lag", sim.lag)?;
    sim.initial.validate()?;
    let ou = sim.model.ou_parameters();
    let steps = if ou.is_some() {
        0
    } else {
        positive("dt", sim.dt)?;
        (sim.lag / sim.dt).ceil().max(1.0) as usize
    };
    let pairs: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..sim.m)
        .into_par_iter()
        .map(|i| {
            let mut r: StreamRng = rng::substream(sim.seed, domain, i as u64);
            let x0 = sim.initial.sample(sim.dim, &mut r);
            let y = match ou {
                Some((alpha, beta_temp)) => x0
                    .iter()
                    .map(|&xi| ou_step_unchecked(xi, sim.lag, alpha, beta_temp, &mut r))
                    .collect(),
                None => {
                    let h = sim.lag / steps as f64;
                    let mut state = x0.clone();
                    let mut drift = vec![0.0; sim.dim];
                    for step in 0..steps {
                        em_step(sim.model, &mut state, &mut drift, h, step, &mut r)?;
                    }
                    state
                }
            };
            Ok((x0, y))
        })
        .collect();
    let mut xs = Vec::with_capacity(sim.m * sim.dim);
    let mut ys = Vec::with_capacity(sim.m * sim.dim);
    for p in pairs {
        let (x, y) = p?;
        xs.extend(x);
        ys.extend(y);
    }
    PairedDataset::new(PointSet::new(xs, sim.dim)?, PointSet::new(ys, sim.dim)?, sim.lag, sim.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, substream};

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn ou_step_stationary_limit() {
        let mut r = substream(1, domain::TRAJECTORY, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| ou_exact_step(3.0, 50.0, 1.0, 1.0, &mut r).unwrap()).collect();
        let (_, var) = mean_var(&draws);
        assert!((0.98..=1.02).contains(&var), "variance {var}");
    }

    #[test]
    fn ou_step_small_lag_stays_put() {
        let mut r = substream(1, domain::TRAJECTORY, 1);
        let y = ou_exact_step(0.7, 1e-12, 1.0, 1.0, &mut r).unwrap();
        assert!((y - 0.7).abs() < 1e-5);
    }

    #[test]
    fn ou_step_rejects_bad_parameters() {
        let mut r = substream(1, domain::TRAJECTORY, 2);
        assert!(ou_exact_step(0.0, 0.0, 1.0, 1.0, &mut r).is_err());
        assert!(ou_exact_step(0.0, 1.0, -1.0, 1.0, &mut r).is_err());
        assert!(ou_exact_step(0.0, 1.0, 1.0, 0.0, &mut r).is_err());
    }

    #[test]
    fn ou_conditional_moments() {
        let model = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let t: f64 = 0.5;
        let data = simulate_pairs(&PairSimulation {
            model: &model,
            initial: &InitialDistribution::Point { value: 1.0 },
            dim: 1,
            lag: t,
            m: 100_000,
            dt: 0.01,
            seed: 3,
        })
        .unwrap();
        let (mean, var) = mean_var(data.y.as_slice());
        let want_var = 1.0 - (-2.0 * t).exp();
        let se = (want_var / 1e5).sqrt();
        assert!((mean - (-t).exp()).abs() < 4.0 * se);
        assert!((var - want_var).abs() < 4.0 * want_var * (2.0 / 1e5f64).sqrt());
    }

    #[test]
    fn em_degenerate_constant_path() {
        let zero: DriftFn = Arc::new(|_x, out| out.fill(0.0));
        let model = SdeModel::custom("still", zero, 0.0).unwrap();
        let mut r = substream(0, domain::TRAJECTORY, 0);
        let path = euler_maruyama(&model, &[1.5, -2.0], 0.1, 10, &mut r).unwrap();
        assert_eq!(path.len(), 11);
        assert!(path.rows().all(|row| row == [1.5, -2.0]));
    }

    #[test]
    fn em_reports_blow_up_step() {
        let bad: DriftFn = Arc::new(|x, out| out[0] = if x[0] > 2.0 { f64::INFINITY } else { 1.0 });
        let model = SdeModel::custom("ramp", bad, 0.0).unwrap();
        let mut r = substream(0, domain::TRAJECTORY, 0);
        let err = euler_maruyama(&model, &[0.0], 1.0, 10, &mut r).unwrap_err();
        assert!(matches!(err, Error::NonFiniteDrift { step: 3 }), "{err:?}");
    }

    fn em_mean_at_one(dt: f64, paths: usize, seed: u64) -> f64 {
        let model = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let steps = (1.0 / dt).round() as usize;
        let finals: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|i| {
                let mut r = substream(seed, domain::TRAJECTORY, i as u64);
                let mut state = [1.0];
                let mut drift = [0.0];
                for s in 0..steps {
                    em_step(&model, &mut state, &mut drift, dt, s, &mut r).unwrap();
                }
                state[0]
            })
            .collect();
        finals.iter().sum::<f64>() / paths as f64
    }

    #[test]
    fn em_ou_mean() {
        let mean = em_mean_at_one(1e-3, 10_000, 11);
        let se = ((1.0 - (-2.0f64).exp()) / 1e4).sqrt();
        assert!((mean - (-1.0f64).exp()).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn em_weak_error_decreases_with_dt() {
        let exact = (-1.0f64).exp();
        let se = ((1.0 - (-2.0f64).exp()) / 1e5).sqrt();
        let errs: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .enumerate()
            .map(|(k, &dt)| (em_mean_at_one(dt, 100_000, 20 + k as u64) - exact).abs())
            .collect();
        assert!(errs[0] > errs[1], "{errs:?}");
        assert!(errs[2] <= errs[1] + 3.0 * se, "{errs:?}");
        assert!(errs[2] < errs[0], "{errs:?}");
    }

    #[test]
    fn double_well_occupies_minima() {
        let model = SdeModel::langevin(Potential::double_well(), 1.0).unwrap();
        let mut r = substream(5, domain::TRAJECTORY, 0);
        let path = euler_maruyama(&model, &[1.0], 2e-3, 500_000, &mut r).unwrap();
        let near = |lo: f64, hi: f64| {
            path.as_slice().iter().filter(|x| (lo..hi).contains(&x.abs())).count() as f64 / path.len() as f64
        };
        // Boltzmann density exp(-V) by midpoint quadrature.
        let p = Potential::double_well();
        let h = 1e-4;
        let grid: Vec<f64> = (0..60_000).map(|i| -3.0 + (i as f64 + 0.5) * h).collect();
        let z: f64 = grid.iter().map(|&x| (-p.value(&[x])).exp() * h).sum();
        let mass = |lo: f64, hi: f64| {
            grid.iter().filter(|x| (lo..hi).contains(&x.abs())).map(|&x| (-p.value(&[x])).exp() * h).sum::<f64>() / z
        };
        let (emp, want) = (near(0.5, 1.5), mass(0.5, 1.5));
        assert!((emp - want).abs() < 0.05, "{emp} vs {want}");
        assert!(near(0.5, 1.5) > 2.0 * near(0.0, 0.25));
    }

    #[test]
    fn potential_gradient() {
        let p = Potential::double_well();
        assert_eq!(p.value(&[1.0]), 0.0);
        assert_eq!(p.derivative(2.0), 4.0 * 2.0 * 3.0);
        let m = SdeModel::langevin(p, 2.0).unwrap();
        let mut out = [0.0];
        m.drift(&[2.0], &mut out);
        assert_eq!(out[0], -24.0);
        assert_eq!(m.diffusion_const(), 1.0);
    }

    #[test]
    fn simulate_pairs_contracts() {
        let model = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let init = InitialDistribution::Gaussian { mean: 0.5, variance: 2.0 };
        let sim = |m, seed| PairSimulation { model: &model, initial: &init, dim: 1, lag: 0.1, m, dt: 1e-3, seed };
        let d = simulate_pairs(&sim(2, 9)).unwrap();
        assert_eq!((d.x.len(), d.y.len()), (2, 2));
        assert_eq!(simulate_pairs(&sim(250, 9)).unwrap(), simulate_pairs(&sim(250, 9)).unwrap());
        assert_ne!(simulate_pairs(&sim(250, 9)).unwrap(), simulate_pairs(&sim(250, 10)).unwrap());
        assert!(matches!(simulate_pairs(&sim(1, 9)), Err(Error::InvalidArgument { name: "m", .. })));
    }

    #[test]
    fn langevin_pairs_are_finite_and_reproducible() {
        let model = SdeModel::langevin(Potential::double_well(), 1.0).unwrap();
        let init = InitialDistribution::Uniform { low: -1.5, high: 1.5 };
        let sim = PairSimulation { model: &model, initial: &init, dim: 2, lag: 0.25, m: 100, dt: 0.01, seed: 4 };
        let a = simulate_pairs(&sim).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a.dim(), 2);
        assert_eq!(a, simulate_pairs(&sim).unwrap());
    }
}
