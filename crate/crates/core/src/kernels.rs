//! Kernel evaluation, Gram matrices and weighted RKHS embeddings.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense Gram matrix `K[i, j] = k(row_i, col_j)`.
pub type GramMatrix = DMatrix<f64>;

/// A set of `n` states in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "state dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "data",
                format!("length {} is not a multiple of dimension {dim}", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "point {} coordinate {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { data, dim })
    }

    /// One-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::Empty("point set"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Points at `indices`, in that order; repeats are kept.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointSet {
            data,
            dim: self.dim,
        }
    }

    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        check_dims(self.dim, other.dim)?;
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(PointSet {
            data,
            dim: self.dim,
        })
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    GaussianRbf,
}

/// A positive-definite kernel `k(x, y)`.
pub trait Kernel: Sync {
    /// Evaluate on two states of equal dimension. Dimensions are not checked.
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
}

/// Kernel family plus its length-scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

/// Gram matrices of at most this many points per side feed the median heuristic.
pub const MEDIAN_HEURISTIC_MAX_POINTS: usize = 2000;

impl KernelSpec {
    /// `exp(-|x - y|^2 / (2 bandwidth^2))`.
    pub fn gaussian_rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", format!("must be positive and finite, got {bandwidth}")));
        }
        Ok(Self {
            family: KernelFamily::GaussianRbf,
            bandwidth,
        })
    }

    /// Gaussian RBF with bandwidth set to the median pairwise distance of
    /// `points` (the first [`MEDIAN_HEURISTIC_MAX_POINTS`] of them).
    pub fn median_heuristic(points: &PointSet) -> Result<Self> {
        let n = points.len().min(MEDIAN_HEURISTIC_MAX_POINTS);
        if n < 2 {
            return Err(Error::invalid("points", "median heuristic needs at least two points"));
        }
        let mut dists = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in 0..i {
                dists.push(sq_dist(points.row(i), points.row(j)).sqrt());
            }
        }
        let mid = dists.len() / 2;
        let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
        let median = *median;
        if median <= 0.0 {
            return Err(Error::invalid(
                "points",
                "median pairwise distance is zero; supply an explicit bandwidth",
            ));
        }
        Self::gaussian_rbf(median)
    }
}

impl Kernel for KernelSpec {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::GaussianRbf => {
                (-sq_dist(x, y) / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
        }
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn eval_kernel(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_dims(x.len(), y.len())?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument".into()));
    }
    Ok(spec.eval(x, y))
}

/// `K[i, j] = k(rows_i, cols_j)`.
///
/// Columns are filled in parallel; each entry depends only on its two
/// points, so the result does not depend on the thread count. A square Gram
/// on a single point set is exactly symmetric because the squared distance is
/// computed from exactly negated differences.
pub fn gram<K: Kernel>(rows: &PointSet, cols: &PointSet, kernel: &K) -> Result<GramMatrix> {
    check_dims(rows.dim(), cols.dim())?;
    Ok(gram_unchecked(rows, cols, kernel))
}

pub(crate) fn gram_unchecked<K: Kernel>(rows: &PointSet, cols: &PointSet, kernel: &K) -> GramMatrix {
    let n = rows.len();
    let m = cols.len();
    let mut data = vec![0.0; n * m];
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(j, column)| {
        let c = cols.row(j);
        for (i, out) in column.iter_mut().enumerate() {
            *out = kernel.eval(rows.row(i), c);
        }
    });
    DMatrix::from_vec(n, m, data)
}

/// `K_{rows, cols} w` without materializing the Gram matrix.
pub(crate) fn gram_apply<K: Kernel>(rows: &PointSet, cols: &PointSet, w: &DVector<f64>, kernel: &K) -> DVector<f64> {
    let out: Vec<f64> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let r = rows.row(i);
            cols.rows().zip(w.iter()).map(|(c, wj)| wj * kernel.eval(r, c)).sum()
        })
        .collect();
    DVector::from_vec(out)
}

/// A finite weighted combination `sum_i w_i k(z_i, .)` of kernel sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    anchors: Arc<PointSet>,
    weights: DVector<f64>,
}

impl Embedding {
    pub fn new(anchors: Arc<PointSet>, weights: DVector<f64>) -> Result<Self> {
        if anchors.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "embedding anchors vs weights",
                left: anchors.len(),
                right: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("embedding weight".into()));
        }
        Ok(Self { anchors, weights })
    }

    /// Unit mass at a single state.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        let anchors = PointSet::new(point.to_vec(), point.len())?;
        Self::new(Arc::new(anchors), DVector::from_element(1, 1.0))
    }

    pub fn anchors(&self) -> &PointSet {
        &self.anchors
    }

    pub fn anchors_arc(&self) -> &Arc<PointSet> {
        &self.anchors
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.anchors.dim()
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding {
            anchors: Arc::clone(&self.anchors),
            weights: &self.weights * factor,
        }
    }

    /// `a * self + b * other` with anchors concatenated (no deduplication).
    pub fn combine(&self, a: f64, other: &Embedding, b: f64) -> Result<Embedding> {
        let anchors = self.anchors.concat(&other.anchors)?;
        let weights = DVector::from_iterator(
            self.len() + other.len(),
            self.weights.iter().map(|w| a * w).chain(other.weights.iter().map(|w| b * w)),
        );
        Embedding::new(Arc::new(anchors), weights)
    }
}

/// Empirical kernel mean embedding: the samples with uniform weights `1/n`.
pub fn embed_sample(samples: PointSet) -> Result<Embedding> {
    embed_sample_arc(Arc::new(samples))
}

pub fn embed_sample_arc(samples: Arc<PointSet>) -> Result<Embedding> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Empty("sample"));
    }
    Embedding::new(samples, DVector::from_element(n, 1.0 / n as f64))
}

/// `w_a^T K_{Z_a Z_b} w_b`.
pub fn rkhs_inner<K: Kernel>(a: &Embedding, b: &Embedding, kernel: &K) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(inner_unchecked(a, b, kernel))
}

fn inner_unchecked<K: Kernel>(a: &Embedding, b: &Embedding, kernel: &K) -> f64 {
    if Arc::ptr_eq(&a.anchors, &b.anchors) && a.weights == b.weights {
        return self_inner(a, kernel);
    }
    let za = &a.anchors;
    let zb = &b.anchors;
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let zi = za.row(i);
            let s: f64 = zb.rows().zip(b.weights.iter()).map(|(zj, wj)| wj * kernel.eval(zi, zj)).sum();
            a.weights[i] * s
        })
        .collect();
    rows.iter().sum()
}

/// Symmetric half-sum for `<a, a>`.
fn self_inner<K: Kernel>(a: &Embedding, kernel: &K) -> f64 {
    let z = &a.anchors;
    let w = &a.weights;
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let zi = z.row(i);
            let off: f64 = (0..i).map(|j| w[j] * kernel.eval(zi, z.row(j))).sum();
            w[i] * (w[i] * kernel.eval(zi, zi) + 2.0 * off)
        })
        .collect();
    rows.iter().sum()
}

pub fn rkhs_norm<K: Kernel>(a: &Embedding, kernel: &K) -> f64 {
    self_inner(a, kernel).max(0.0).sqrt()
}

/// `sqrt(max(0, <a,a> + <b,b> - 2 <a,b>))`.
pub fn mmd<K: Kernel>(a: &Embedding, b: &Embedding, kernel: &K) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let sq = inner_unchecked(a, a, kernel) + inner_unchecked(b, b, kernel) - 2.0 * inner_unchecked(a, b, kernel);
    Ok(sq.max(0.0).sqrt())
}
