//! Small dense linear-algebra helpers shared by the estimators.
//!
//! Everything goes through a full SVD; the matrices involved are at most a
//! few hundred rows and columns.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SVD};

/// Singular values in non-increasing order. Empty matrices have none.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values_unordered().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Number of singular values strictly above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    rank_of(&singular_values(m), rel_tol)
}

pub(crate) fn rank_of(sv: &[f64], rel_tol: f64) -> usize {
    let Some(&max) = sv.first() else { return 0 };
    if max <= 0.0 {
        return 0;
    }
    let cut = rel_tol * max;
    sv.iter().filter(|&&s| s > cut).count()
}

/// Number of singular values strictly above an absolute threshold.
pub fn count_above(m: &DMatrix<f64>, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s > threshold).count()
}

/// A thin SVD with singular values sorted in non-increasing order and a
/// deterministic sign convention: the largest-magnitude entry of every right
/// singular vector is positive (first such entry on ties).
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

impl SortedSvd {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return SortedSvd {
                u: DMatrix::zeros(rows, 0),
                sigma: Vec::new(),
                v_t: DMatrix::zeros(0, cols),
            };
        }
        let svd = SVD::new_unordered(m.clone(), true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let k = svd.singular_values.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

        let mut su = DMatrix::zeros(rows, k);
        let mut sv = DMatrix::zeros(k, cols);
        let mut sigma = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            let row = v_t.row(src);
            let mut pivot = 0;
            for j in 1..cols {
                if row[j].abs() > row[pivot].abs() {
                    pivot = j;
                }
            }
            let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
            su.set_column(dst, &(u.column(src) * sign));
            sv.set_row(dst, &(row * sign));
            sigma.push(svd.singular_values[src]);
        }
        SortedSvd { u: su, sigma, v_t: sv }
    }
}

/// Moore-Penrose pseudo-inverse, zeroing singular values at or below
/// `rel_tol * sigma_max`. Returns the pseudo-inverse and the rank it used.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let (rows, cols) = m.shape();
    let svd = SortedSvd::new(m);
    let rank = rank_of(&svd.sigma, rel_tol);
    let mut pinv = DMatrix::zeros(cols, rows);
    for i in 0..rank {
        let v = svd.v_t.row(i).transpose();
        let u = svd.u.column(i);
        pinv += (v / svd.sigma[i]) * u.transpose();
    }
    (pinv, rank)
}

/// Horizontal concatenation of equally tall blocks.
pub fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), b.shape()).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation of equally wide blocks.
pub fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), b.shape()).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Selects the given rows (0-based) in order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub(crate) fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}
