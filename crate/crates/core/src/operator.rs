//! The regularized empirical embedded Perron-Frobenius operator
//! `K_YX (K_XX + m lambda I)^-1` and its RKHS operator norms.
//!
//! Pushing an embedding `mu = sum_j w_j k(z_j, .)` forward yields an embedding
//! anchored at the training outputs with weights
//! `beta = (K_XX + m lambda I)^-1 K_{X Z} w`.
//!
//! Bitwise-identical training pairs (which bootstrap resampling produces) are
//! stored once with a multiplicity `n_k`. With `P` the expansion from distinct
//! to repeated pairs and `N = P^T P = diag(n)`,
//!
//! ```text
//! (P K P^T + m lambda I)^-1 P = P N^{-1/2} (N^{1/2} K N^{1/2} + m lambda I)^-1 N^{1/2}
//! ```
//!
//! so all solves run against the smaller SPD matrix
//! `G = N^{1/2} K N^{1/2} + m lambda I` without changing any result.
//!
//! Operator norms are suprema of `|P mu|_H` over `|mu|_H <= 1`. The
//! supremum is attained in the span of the relevant input anchors, where the
//! RKHS geometry is captured by coordinates `L` with `K ~= L L^T` restricted
//! to the numerical range of `K` (see [`RangeBasis`]).

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernels::{self, check_dims, Embedding, KernelSpec, PointSet};
use crate::linalg::{self, RangeBasis};
use crate::sde::PairedDataset;

#[derive(Debug, Clone)]
pub struct FittedOperator {
    x_train: Arc<PointSet>,
    y_train: Arc<PointSet>,
    lambda: f64,
    spec: KernelSpec,
    /// For every training pair, its index among the distinct pairs.
    pair_index: Vec<usize>,
    x_distinct: PointSet,
    y_distinct: PointSet,
    sqrt_counts: DVector<f64>,
    k_xx: DMatrix<f64>,
    k_yy: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// `E = |P_hat|` and `F`, an estimate of `|P_hat - P|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorNorms {
    pub e_norm: f64,
    pub f_norm: f64,
}

impl OperatorNorms {
    pub fn new(e_norm: f64, f_norm: f64) -> Result<Self> {
        for (name, v) in [("e_norm", e_norm), ("f_norm", f_norm)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { e_norm, f_norm })
    }
}

pub fn fit(data: &PairedDataset, lambda: f64, spec: KernelSpec) -> Result<FittedOperator> {
    FittedOperator::fit(data, lambda, spec)
}

impl FittedOperator {
    pub fn fit(data: &PairedDataset, lambda: f64, spec: KernelSpec) -> Result<Self> {
        let m = data.len();
        if m < 2 {
            return Err(Error::invalid("m", format!("need at least 2 training pairs, got {m}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be positive and finite, got {lambda}")));
        }
        let rows = data.x.rows().zip(data.y.rows()).map(|(x, y)| [x, y].concat());
        let joint: Vec<Vec<f64>> = rows.collect();
        let (firsts, pair_index) = linalg::unique_rows(joint.iter().map(Vec::as_slice));
        let mut counts = vec![0usize; firsts.len()];
        for &k in &pair_index {
            counts[k] += 1;
        }
        let x_distinct = data.x.select(&firsts);
        let y_distinct = data.y.select(&firsts);
        let k_xx = kernels::gram_unchecked(&x_distinct, &x_distinct, &spec);
        let k_yy = kernels::gram_unchecked(&y_distinct, &y_distinct, &spec);
        Self::assemble(
            Arc::clone(&data.x),
            Arc::clone(&data.y),
            lambda,
            spec,
            pair_index,
            x_distinct,
            y_distinct,
            &counts,
            k_xx,
            k_yy,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        x_train: Arc<PointSet>,
        y_train: Arc<PointSet>,
        lambda: f64,
        spec: KernelSpec,
        pair_index: Vec<usize>,
        x_distinct: PointSet,
        y_distinct: PointSet,
        counts: &[usize],
        k_xx: DMatrix<f64>,
        k_yy: DMatrix<f64>,
    ) -> Result<Self> {
        let m = x_train.len() as f64;
        let sqrt_counts = DVector::from_iterator(counts.len(), counts.iter().map(|&c| (c as f64).sqrt()));
        let mut g = DMatrix::from_fn(counts.len(), counts.len(), |i, j| sqrt_counts[i] * k_xx[(i, j)] * sqrt_counts[j]);
        for i in 0..counts.len() {
            g[(i, i)] += m * lambda;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite entry in K_XX + m lambda I".into()));
        }
        let chol = Cholesky::new(g).ok_or_else(|| Error::Factorization("K_XX + m lambda I is not positive definite".into()))?;
        Ok(Self {
            x_train,
            y_train,
            lambda,
            spec,
            pair_index,
            x_distinct,
            y_distinct,
            sqrt_counts,
            k_xx,
            k_yy,
            chol,
        })
    }

    /// The operator refit on training pairs `indices` (drawn with repeats),
    /// reusing this operator's kernel evaluations. Equivalent to fitting on
    /// `data.select(indices)`.
    pub fn resampled(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::invalid("indices", "need at least 2 resampled pairs"));
        }
        let mut counts = vec![0usize; self.x_distinct.len()];
        for &i in indices {
            if i >= self.pair_index.len() {
                return Err(Error::invalid("indices", format!("pair index {i} out of range")));
            }
            counts[self.pair_index[i]] += 1;
        }
        let present: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] > 0).collect();
        let mut remap = vec![usize::MAX; counts.len()];
        for (new, &old) in present.iter().enumerate() {
            remap[old] = new;
        }
        let pair_index = indices.iter().map(|&i| remap[self.pair_index[i]]).collect();
        let sub_counts: Vec<usize> = present.iter().map(|&k| counts[k]).collect();
        Self::assemble(
            Arc::new(self.x_train.select(indices)),
            Arc::new(self.y_train.select(indices)),
            self.lambda,
            self.spec,
            pair_index,
            self.x_distinct.select(&present),
            self.y_distinct.select(&present),
            &sub_counts,
            self.k_xx.select_rows(&present).select_columns(&present),
            self.k_yy.select_rows(&present).select_columns(&present),
        )
    }

    pub fn x_train(&self) -> &PointSet {
        &self.x_train
    }

    pub fn y_train(&self) -> &PointSet {
        &self.y_train
    }

    pub fn y_train_arc(&self) -> &Arc<PointSet> {
        &self.y_train
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.x_train.len()
    }

    pub fn dim(&self) -> usize {
        self.x_train.dim()
    }

    /// Number of distinct training pairs.
    pub fn distinct_pairs(&self) -> usize {
        self.x_distinct.len()
    }

    /// `N^{-1/2} G^{-1} N^{1/2} rhs`: weight per copy of each distinct pair,
    /// given evaluations of the input at the distinct training inputs.
    fn per_copy_weights(&self, mut rhs: DMatrix<f64>) -> DMatrix<f64> {
        for (i, mut row) in rhs.row_iter_mut().enumerate() {
            row *= self.sqrt_counts[i];
        }
        let mut sol = self.chol.solve(&rhs);
        for (i, mut row) in sol.row_iter_mut().enumerate() {
            row /= self.sqrt_counts[i];
        }
        sol
    }

    /// Output weights aggregated on the distinct outputs: `N` times the
    /// per-copy weights.
    fn distinct_output_weights(&self, evals: DMatrix<f64>) -> DMatrix<f64> {
        let mut w = self.per_copy_weights(evals);
        for (i, mut row) in w.row_iter_mut().enumerate() {
            row *= self.sqrt_counts[i] * self.sqrt_counts[i];
        }
        w
    }

    /// `P_hat mu`, anchored at `y_train`.
    pub fn pushforward(&self, mu: &Embedding) -> Result<Embedding> {
        check_dims(self.dim(), mu.dim())?;
        let evals = kernels::gram_apply(&self.x_distinct, mu.anchors(), mu.weights(), &self.spec);
        let per_copy = self.per_copy_weights(DMatrix::from_column_slice(evals.len(), 1, evals.as_slice()));
        let weights = DVector::from_iterator(self.m(), self.pair_index.iter().map(|&k| per_copy[(k, 0)]));
        Embedding::new(Arc::clone(&self.y_train), weights)
    }

    /// `|P_hat|`, the largest `|P_hat mu|_H` over `|mu|_H <= 1`.
    pub fn operator_norm(&self) -> f64 {
        self.operator_norm_with_maximizer().0
    }

    /// The operator norm together with a unit-norm input embedding attaining
    /// it, supported on the distinct training inputs.
    pub fn operator_norm_with_maximizer(&self) -> (f64, Embedding) {
        let (xs, idx) = linalg::unique_points(&self.x_distinct);
        let k = if xs.len() == self.x_distinct.len() {
            self.k_xx.clone()
        } else {
            kernels::gram_unchecked(&xs, &xs, &self.spec)
        };
        let basis = RangeBasis::new(&k);
        let j = self.distinct_output_weights(basis.coords.select_rows(&idx));
        let mut reduced = j.transpose() * &self.k_yy * &j;
        linalg::symmetrize(&mut reduced);
        let (top, v) = linalg::top_eigenpair(reduced);
        let alpha = basis.coefficients(&v);
        let mu = Embedding::new(Arc::new(xs), alpha).expect("basis coefficients match anchors");
        (top.max(0.0).sqrt(), mu)
    }
}

/// Inputs of a difference norm expressed in a shared range basis.
struct Projected {
    /// Output weights on the distinct outputs, one column per basis direction.
    j: DMatrix<f64>,
}

fn project(op: &FittedOperator, basis: &RangeBasis, x_rows: &[usize]) -> Projected {
    Projected {
        j: op.distinct_output_weights(basis.coords.select_rows(x_rows)),
    }
}

/// Reduced `A + B - C - C^T` for the pair, symmetrized.
fn difference_form(a: &DMatrix<f64>, p2: &Projected, k22: &DMatrix<f64>, p1: &Projected, k12: &DMatrix<f64>) -> DMatrix<f64> {
    let b = p2.j.transpose() * k22 * &p2.j;
    let c = p1.j.transpose() * k12 * &p2.j;
    let mut m = a + b - &c - c.transpose();
    linalg::symmetrize(&mut m);
    m
}

fn check_compatible(op1: &FittedOperator, op2: &FittedOperator) -> Result<()> {
    if op1.spec != op2.spec {
        return Err(Error::KernelMismatch);
    }
    check_dims(op1.dim(), op2.dim())
}

/// `|op1 - op2|` in the RKHS operator norm.
pub fn operator_diff_norm(op1: &FittedOperator, op2: &FittedOperator) -> Result<f64> {
    Ok(operator_diff_norm_with_maximizer(op1, op2)?.0)
}

/// The difference norm and a unit-norm input embedding attaining it,
/// supported on the distinct training inputs of both operators.
pub fn operator_diff_norm_with_maximizer(op1: &FittedOperator, op2: &FittedOperator) -> Result<(f64, Embedding)> {
    check_compatible(op1, op2)?;
    let z = op1.x_distinct.concat(&op2.x_distinct)?;
    let (zs, idx) = linalg::unique_points(&z);
    let k_zz = kernels::gram_unchecked(&zs, &zs, &op1.spec);
    let basis = RangeBasis::new(&k_zz);
    let n1 = op1.x_distinct.len();
    let p1 = project(op1, &basis, &idx[..n1]);
    let p2 = project(op2, &basis, &idx[n1..]);
    let a = p1.j.transpose() * &op1.k_yy * &p1.j;
    let k12 = kernels::gram_unchecked(&op1.y_distinct, &op2.y_distinct, &op1.spec);
    let m = difference_form(&a, &p2, &op2.k_yy, &p1, &k12);
    let (top, v) = linalg::top_eigenpair(m);
    let mu = Embedding::new(Arc::new(zs), basis.coefficients(&v)).expect("basis coefficients match anchors");
    Ok((top.max(0.0).sqrt(), mu))
}

/// Difference norms between a base operator and refits on resamples of its
/// own training pairs. The input span of every resample lies inside the
/// base operator's, so the range basis and the base-side terms are computed
/// once.
pub(crate) struct ResampleDeviation<'a> {
    base: &'a FittedOperator,
    basis: RangeBasis,
    x_rows: Vec<usize>,
    p1: Projected,
    a: DMatrix<f64>,
}

impl<'a> ResampleDeviation<'a> {
    pub fn new(base: &'a FittedOperator) -> Self {
        let (xs, x_rows) = linalg::unique_points(&base.x_distinct);
        let k = if xs.len() == base.x_distinct.len() {
            base.k_xx.clone()
        } else {
            kernels::gram_unchecked(&xs, &xs, &base.spec)
        };
        let basis = RangeBasis::new(&k);
        let p1 = project(base, &basis, &x_rows);
        let a = p1.j.transpose() * &base.k_yy * &p1.j;
        Self {
            base,
            basis,
            x_rows,
            p1,
            a,
        }
    }

    /// `|P_base - P_resample|` for the resample given by training-pair indices.
    pub fn deviation(&self, indices: &[usize]) -> Result<f64> {
        let rep = self.base.resampled(indices)?;
        // Distinct pairs of the resample, as indices into the base's distinct pairs.
        let mut present = vec![false; self.base.x_distinct.len()];
        for &i in indices {
            present[self.base.pair_index[i]] = true;
        }
        let kept: Vec<usize> = (0..present.len()).filter(|&k| present[k]).collect();
        let rows: Vec<usize> = kept.iter().map(|&k| self.x_rows[k]).collect();
        let p2 = project(&rep, &self.basis, &rows);
        let k12 = self.base.k_yy.select_columns(&kept);
        let m = difference_form(&self.a, &p2, &rep.k_yy, &self.p1, &k12);
        let (top, _) = linalg::top_eigenpair(m);
        Ok(top.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{embed_sample_arc, rkhs_norm, Kernel};
    use crate::rng::{domain, substream};
    use crate::sde::{simulate_pairs, InitialDistribution, PairSimulation, SdeModel};
    use rand::Rng;

    fn rbf(s: f64) -> KernelSpec {
        KernelSpec::gaussian_rbf(s).unwrap()
    }

    fn toy() -> PairedDataset {
        PairedDataset::new(
            PointSet::from_scalars(&[0.0, 1.0]).unwrap(),
            PointSet::from_scalars(&[1.0, 0.0]).unwrap(),
            1.0,
            0,
        )
        .unwrap()
    }

    fn ou_data(m: usize, seed: u64) -> PairedDataset {
        let model = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let init = InitialDistribution::Gaussian { mean: 0.5, variance: 2.0 };
        simulate_pairs(&PairSimulation { model: &model, initial: &init, dim: 1, lag: 0.5, m, dt: 1e-3, seed }).unwrap()
    }

    fn dense_inverse_weights(op: &FittedOperator, mu: &Embedding) -> DVector<f64> {
        let x = op.x_train();
        let m = op.m();
        let mut g = kernels::gram(x, x, op.spec()).unwrap();
        for i in 0..m {
            g[(i, i)] += m as f64 * op.lambda();
        }
        let kxz = kernels::gram(x, mu.anchors(), op.spec()).unwrap();
        g.try_inverse().unwrap() * kxz * mu.weights()
    }

    #[test]
    fn toy_regularized_gram() {
        let op = fit(&toy(), 0.5, rbf(1.0)).unwrap();
        let e = (-0.5f64).exp();
        let want = DMatrix::from_row_slice(2, 2, &[2.0, e, e, 2.0]);
        let l = op.chol.l();
        assert!((&l * l.transpose() - want).amax() < 1e-14);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit(&toy(), 0.0, rbf(1.0)).is_err());
        assert!(fit(&toy(), -1.0, rbf(1.0)).is_err());
        let one = PairedDataset::new(PointSet::from_scalars(&[0.0]).unwrap(), PointSet::from_scalars(&[0.0]).unwrap(), 1.0, 0).unwrap();
        assert!(fit(&one, 0.1, rbf(1.0)).is_err());
    }

    #[test]
    fn pushforward_matches_dense_formula() {
        let data = ou_data(5, 1);
        let op = fit(&data, 0.05, rbf(0.9)).unwrap();
        let alpha = DVector::from_vec(vec![0.3, -0.1, 0.7, 0.2, -0.4]);
        let mu = Embedding::new(Arc::clone(&data.x), alpha.clone()).unwrap();
        let got = op.pushforward(&mu).unwrap();
        let k = kernels::gram(&data.x, &data.x, op.spec()).unwrap();
        let mut g = k.clone();
        for i in 0..5 {
            g[(i, i)] += 5.0 * 0.05;
        }
        let want = g.try_inverse().unwrap() * &k * &alpha;
        assert!((got.weights() - want).amax() < 1e-12);
        assert_eq!(got.anchors(), data.y.as_ref());
    }

    #[test]
    fn pushforward_of_zero_and_huge_lambda() {
        let data = ou_data(8, 2);
        let op = fit(&data, 0.01, rbf(1.0)).unwrap();
        let zero = Embedding::new(Arc::clone(&data.x), DVector::zeros(8)).unwrap();
        assert!(op.pushforward(&zero).unwrap().weights().iter().all(|w| *w == 0.0));
        let big = fit(&data, 1e12, rbf(1.0)).unwrap();
        let mu = embed_sample_arc(Arc::clone(&data.x)).unwrap();
        assert!(big.pushforward(&mu).unwrap().weights().amax() < 1e-11);
        assert!(op.pushforward(&Embedding::dirac(&[0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn duplicate_pairs_match_dense_solve() {
        let data = ou_data(12, 3);
        let idx = [0, 0, 3, 5, 5, 5, 7, 11, 2, 3, 9, 9];
        let resampled = data.select(&idx);
        let op = fit(&resampled, 0.02, rbf(1.1)).unwrap();
        assert_eq!(op.distinct_pairs(), 7);
        let mu = Embedding::new(Arc::new(PointSet::from_scalars(&[0.1, -1.0, 2.2]).unwrap()), DVector::from_vec(vec![0.5, 0.3, -0.2])).unwrap();
        let got = op.pushforward(&mu).unwrap();
        let want = dense_inverse_weights(&op, &mu);
        assert!((got.weights() - want).amax() < 1e-10);

        let base = fit(&data, 0.02, rbf(1.1)).unwrap();
        let via_base = base.resampled(&idx).unwrap();
        assert!((via_base.pushforward(&mu).unwrap().weights() - got.weights()).amax() < 1e-10);
    }

    #[test]
    fn norm_of_identity_limit() {
        let x = PointSet::from_scalars(&[-2.0, -0.7, 0.1, 1.0, 2.4]).unwrap();
        let data = PairedDataset::new(x.clone(), x, 1.0, 0).unwrap();
        let op = fit(&data, 1e-8, rbf(1.0)).unwrap();
        let n = op.operator_norm();
        assert!((n - 1.0).abs() <= 1e-3, "{n}");
    }

    #[test]
    fn norm_decreases_in_lambda() {
        let data = ou_data(30, 4);
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0].iter().map(|&l| fit(&data, l, rbf(1.0)).unwrap().operator_norm()).collect();
        assert!(norms.windows(2).all(|w| w[0] > w[1]), "{norms:?}");
        assert!(fit(&data, 1e9, rbf(1.0)).unwrap().operator_norm() < 1e-8);
    }

    #[test]
    fn maximizer_attains_norm() {
        let data = ou_data(25, 5);
        let op = fit(&data, 0.01, rbf(1.0)).unwrap();
        let (norm, mu) = op.operator_norm_with_maximizer();
        assert!((rkhs_norm(&mu, op.spec()) - 1.0).abs() < 1e-8);
        let pushed = rkhs_norm(&op.pushforward(&mu).unwrap(), op.spec());
        assert!((pushed - norm).abs() < 1e-8, "{pushed} vs {norm}");
    }

    fn random_unit_embedding(anchors: &Arc<PointSet>, k: &KernelSpec, r: &mut impl Rng) -> Embedding {
        let w = DVector::from_fn(anchors.len(), |_, _| r.random_range(-1.0..1.0));
        let e = Embedding::new(Arc::clone(anchors), w).unwrap();
        let n = rkhs_norm(&e, k);
        e.scaled(1.0 / n)
    }

    #[test]
    fn norm_dominates_random_inputs() {
        let data = ou_data(20, 6);
        let op = fit(&data, 0.01, rbf(1.0)).unwrap();
        let norm = op.operator_norm();
        let mut r = substream(6, domain::TRAJECTORY, 0);
        for _ in 0..100 {
            let mu = random_unit_embedding(&data.x, op.spec(), &mut r);
            assert!(rkhs_norm(&op.pushforward(&mu).unwrap(), op.spec()) <= norm + 1e-8);
        }
    }

    #[test]
    fn eigenproblem_forms_agree() {
        // Well separated points keep K_XX well conditioned.
        let x = PointSet::from_scalars(&[-3.0, -1.5, 0.0, 1.4, 3.1, 4.4]).unwrap();
        let y = PointSet::from_scalars(&[-1.0, -0.4, 0.2, 0.5, 1.3, 1.5]).unwrap();
        let data = PairedDataset::new(x.clone(), y.clone(), 1.0, 0).unwrap();
        let spec = rbf(0.8);
        let op = fit(&data, 0.01, spec).unwrap();
        let k = kernels::gram(&x, &x, &spec).unwrap();
        let kyy = kernels::gram(&y, &y, &spec).unwrap();
        let mut g = k.clone();
        for i in 0..6 {
            g[(i, i)] += 6.0 * 0.01;
        }
        let gi = g.try_inverse().unwrap();
        let s = &gi * kyy * &gi;
        // K^{-1} (K S K) = S K, a non-symmetric matrix with real spectrum.
        let sk = &s * &k;
        let ev = sk.complex_eigenvalues();
        let top = ev.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        let n = op.operator_norm();
        assert!((n * n - top).abs() < 1e-8, "{} vs {top}", n * n);
    }

    #[test]
    fn self_difference_is_zero() {
        let op = fit(&ou_data(30, 7), 0.01, rbf(1.0)).unwrap();
        assert!(operator_diff_norm(&op, &op).unwrap() <= 1e-6);
    }

    #[test]
    fn difference_with_annihilated_operator() {
        let data = ou_data(20, 8);
        let op1 = fit(&data, 0.01, rbf(1.0)).unwrap();
        let other = ou_data(20, 9);
        let op2 = fit(&other, 1e14, rbf(1.0)).unwrap();
        let d = operator_diff_norm(&op1, &op2).unwrap();
        assert!((d - op1.operator_norm()).abs() < 1e-4, "{d} vs {}", op1.operator_norm());
    }

    #[test]
    fn difference_norm_is_a_supremum() {
        let data = ou_data(20, 10);
        let base = fit(&data, 0.01, rbf(1.0)).unwrap();
        let mut r = substream(10, domain::BOOTSTRAP, 0);
        let draw = |r: &mut crate::rng::StreamRng| (0..20).map(|_| r.random_range(0..20)).collect::<Vec<usize>>();
        let op1 = fit(&data.select(&draw(&mut r)), 0.01, rbf(1.0)).unwrap();
        let op2 = fit(&data.select(&draw(&mut r)), 0.01, rbf(1.0)).unwrap();
        let (d, mu_star) = operator_diff_norm_with_maximizer(&op1, &op2).unwrap();
        let z = Arc::new(op1.x_train().concat(op2.x_train()).unwrap());
        let apply = |mu: &Embedding| {
            let a = op1.pushforward(mu).unwrap();
            let b = op2.pushforward(mu).unwrap();
            rkhs_norm(&a.combine(1.0, &b, -1.0).unwrap(), op1.spec())
        };
        for _ in 0..100 {
            let mu = random_unit_embedding(&z, op1.spec(), &mut r);
            assert!(apply(&mu) <= d + 1e-6);
        }
        assert!((rkhs_norm(&mu_star, op1.spec()) - 1.0).abs() < 1e-6);
        assert!((apply(&mu_star) - d).abs() < 1e-6);
        let _ = base;
    }

    #[test]
    fn difference_triangle_inequality() {
        let data = ou_data(15, 11);
        let mut r = substream(11, domain::BOOTSTRAP, 0);
        let ops: Vec<FittedOperator> = (0..3)
            .map(|_| {
                let idx: Vec<usize> = (0..15).map(|_| r.random_range(0..15)).collect();
                fit(&data.select(&idx), 0.01, rbf(1.0)).unwrap()
            })
            .collect();
        let d = |a: usize, b: usize| operator_diff_norm(&ops[a], &ops[b]).unwrap();
        assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-6);
    }

    #[test]
    fn resample_deviation_matches_generic_path() {
        let data = ou_data(30, 12);
        let base = fit(&data, 0.01, rbf(1.0)).unwrap();
        let dev = ResampleDeviation::new(&base);
        let mut r = substream(12, domain::BOOTSTRAP, 0);
        for _ in 0..5 {
            let idx: Vec<usize> = (0..30).map(|_| r.random_range(0..30)).collect();
            let fast = dev.deviation(&idx).unwrap();
            let slow = operator_diff_norm(&base, &fit(&data.select(&idx), 0.01, rbf(1.0)).unwrap()).unwrap();
            assert!((fast - slow).abs() < 1e-8, "{fast} vs {slow}");
        }
    }

    #[test]
    fn kernel_mismatch_rejected() {
        let data = ou_data(6, 13);
        let a = fit(&data, 0.01, rbf(1.0)).unwrap();
        let b = fit(&data, 0.01, rbf(2.0)).unwrap();
        assert!(matches!(operator_diff_norm(&a, &b), Err(Error::KernelMismatch)));
    }

    #[test]
    fn operator_is_shareable() {
        fn assert_sync<T: Send + Sync>() {}
        assert_sync::<FittedOperator>();
        let _ = rbf(1.0).eval(&[0.0], &[0.0]);
    }
}
