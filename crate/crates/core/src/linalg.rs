//! Dense helpers shared by the operator-norm computations.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::kernels::PointSet;

/// Eigenvalues of a Gram matrix below `RANGE_REL_THRESHOLD * lambda_max` are
/// treated as zero when forming its pseudo-inverse / square root.
pub const RANGE_REL_THRESHOLD: f64 = 1e-10;

/// The pivoted Cholesky sweep stops once the trace of the remaining Schur
/// complement is below this fraction of the largest diagonal entry, far
/// beneath the eigenvalue cut-off above.
const PIVOT_RESIDUAL_REL: f64 = 1e-13;

/// Orthogonal coordinates for the numerical range of a PSD Gram matrix `K`:
/// `coords = V_r D_r^{1/2}` so that `K ~= coords coords^T` and
/// `coords^T coords = D_r`, keeping eigenvalues above the relative threshold.
#[derive(Debug, Clone)]
pub(crate) struct RangeBasis {
    pub coords: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl RangeBasis {
    pub fn new(gram: &DMatrix<f64>) -> Self {
        let low_rank = pivoted_cholesky(gram);
        let small = low_rank.transpose() * &low_rank;
        let eig = SymmetricEigen::new(small);
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > RANGE_REL_THRESHOLD * max)
            .collect();
        let rotation = eig.eigenvectors.select_columns(&keep);
        let eigenvalues = DVector::from_iterator(keep.len(), keep.iter().map(|&i| eig.eigenvalues[i]));
        Self {
            coords: low_rank * rotation,
            eigenvalues,
        }
    }

    #[cfg(test)]
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Anchor coefficients `alpha` whose embedding has reduced coordinates `v`,
    /// i.e. `coords^T alpha = v` with `alpha` in the retained range.
    pub fn coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        let scaled = v.component_div(&self.eigenvalues);
        &self.coords * scaled
    }
}

/// Greedy diagonal-pivoted Cholesky: returns `L` (n x p) with `K ~= L L^T`.
fn pivoted_cholesky(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let mut diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let stop = PIVOT_RESIDUAL_REL * max_diag;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut used = vec![false; n];
    while columns.len() < n {
        let residual: f64 = diag.iter().zip(&used).filter(|(_, u)| !**u).map(|(d, _)| d.max(0.0)).sum();
        if residual <= stop {
            break;
        }
        let (pivot, &pd) = diag
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("unused pivot exists");
        if pd <= 0.0 {
            break;
        }
        let root = pd.sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            if used[i] {
                continue;
            }
            let mut v = k[(i, pivot)];
            for c in &columns {
                v -= c[i] * c[pivot];
            }
            col[i] = v / root;
        }
        col[pivot] = root;
        used[pivot] = true;
        for i in 0..n {
            if !used[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        diag[pivot] = 0.0;
        columns.push(col);
    }
    let p = columns.len();
    DMatrix::from_fn(n, p, |i, j| columns[j][i])
}

/// Largest eigenvalue and a unit eigenvector of a symmetric matrix.
pub(crate) fn top_eigenpair(m: DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, DVector::zeros(0));
    }
    let eig = SymmetricEigen::new(m);
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    (val, eig.eigenvectors.column(idx).into_owned())
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Bitwise-identical rows collapsed: returns the distinct rows in order of
/// first appearance and, for every input row, its index among them.
pub(crate) fn unique_rows<'a, I>(rows: I) -> (Vec<usize>, Vec<usize>)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut firsts = Vec::new();
    let mut index = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| canonical_bits(*v)).collect();
        let next = firsts.len();
        let id = *seen.entry(key).or_insert_with(|| {
            firsts.push(i);
            next
        });
        index.push(id);
    }
    (firsts, index)
}

fn canonical_bits(v: f64) -> u64 {
    // +0.0 and -0.0 define the same kernel section.
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

pub(crate) fn unique_points(points: &PointSet) -> (PointSet, Vec<usize>) {
    let (firsts, index) = unique_rows(points.rows());
    (points.select(&firsts), index)
}
