//! Brute-force references for the estimators.
//!
//! Nothing here is fast. These routines define the quantities the greedy
//! allocator approximates (exact observability rank, minimal sensor sets)
//! and check the matrix-power perturbation inequality numerically.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::allocation;
use crate::linalg;
use crate::measurement::MeasurementMatrix;
use crate::{Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_CANDIDATES: usize = 20;

/// Numerical rank of the exactly formed `O(C)`; 0 for an empty `C`.
pub fn exact_observability_rank(a: &DMatrix<f64>, c: &MeasurementMatrix, rel_tol: f64) -> Result<usize> {
    if c.is_empty() {
        return Ok(0);
    }
    let o = allocation::observability_matrix(a, c)?;
    Ok(linalg::numerical_rank(&o.0, rel_tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchSpace {
    All,
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalAllocation {
    pub n_star: usize,
    /// Lexicographically smallest minimal set (per decoupled block when
    /// pruning).
    pub witness: MeasurementMatrix,
    pub search_space: SearchSpace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub rel_tol: f64,
    /// Largest candidate set searched exhaustively (per block when pruning).
    pub max_candidates: usize,
    /// Split the search along the decoupled diagonal blocks of `A`.
    pub prune_blocks: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { rel_tol: DEFAULT_REL_TOL, max_candidates: DEFAULT_MAX_CANDIDATES, prune_blocks: true }
    }
}

/// Connected components of the coupling graph `i ~ j` iff `A_ij != 0` or
/// `A_ji != 0`; each is a decoupled diagonal block after permutation.
pub fn decoupled_blocks(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let r = a.nrows();
    let mut label = vec![usize::MAX; r];
    let mut blocks = Vec::new();
    for start in 0..r {
        if label[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..r {
                if label[j] == usize::MAX && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0) {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

/// Exhaustive minimum number of sensors, drawn from `candidates`, that make
/// `(A, C)` observable. Subsets are tried by increasing size in
/// lexicographic order.
pub fn minimal_sensor_count(
    a: &DMatrix<f64>,
    candidates: &[usize],
    search_space: SearchSpace,
    opts: SearchOptions,
) -> Result<MinimalAllocation> {
    let r = a.nrows();
    let mut pool = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if let Some(&bad) = pool.iter().find(|&&c| c >= r) {
        return Err(Error::CoordinateOutOfRange { coord: bad, r });
    }

    let witness = if opts.prune_blocks {
        let mut all = Vec::new();
        for block in decoupled_blocks(a) {
            let sub = DMatrix::from_fn(block.len(), block.len(), |i, j| a[(block[i], block[j])]);
            let local: Vec<usize> = (0..block.len()).filter(|&i| pool.contains(&block[i])).collect();
            let found = search(&sub, &local, opts)?;
            all.extend(found.into_iter().map(|i| block[i]));
        }
        all.sort_unstable();
        all
    } else {
        search(a, &pool, opts)?
    };
    Ok(MinimalAllocation { n_star: witness.len(), witness: MeasurementMatrix::new(r, witness)?, search_space })
}

fn search(a: &DMatrix<f64>, pool: &[usize], opts: SearchOptions) -> Result<Vec<usize>> {
    let r = a.nrows();
    if pool.len() > opts.max_candidates {
        return Err(Error::SearchSpaceTooLarge { size: pool.len(), cap: opts.max_candidates });
    }
    let full = MeasurementMatrix::new(r, pool.to_vec())?;
    let best = exact_observability_rank(a, &full, opts.rel_tol)?;
    if best < r {
        return Err(Error::NotObservableWithinCandidates { rank: best, r });
    }
    for size in 1..=pool.len() {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let coords: Vec<usize> = idx.iter().map(|&k| pool[k]).collect();
            let c = MeasurementMatrix::new(r, coords)?;
            if exact_observability_rank(a, &c, opts.rel_tol)? == r {
                return Ok(c.coords().to_vec());
            }
            if !next_combination(&mut idx, pool.len()) {
                break;
            }
        }
    }
    unreachable!("the full candidate set is observable")
}

/// Advances `idx` (strictly increasing, values below `n`) to the next
/// combination in lexicographic order.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Left and right sides of
/// `||(A + D)^n - A^n|| <= n (psi/rho)^2 (rho + (psi/rho) ||D||)^(n-1) ||D||`.
pub fn power_perturbation_sides(a: &DMatrix<f64>, delta: &DMatrix<f64>, psi_a: f64, rho_a: f64, n: u32) -> (f64, f64) {
    let perturbed = a + delta;
    let r = a.nrows();
    let (mut pa, mut pp) = (DMatrix::identity(r, r), DMatrix::identity(r, r));
    for _ in 0..n {
        pa = &pa * a;
        pp = &pp * &perturbed;
    }
    let lhs = linalg::spectral_norm(&(pp - pa));
    let dn = linalg::spectral_norm(delta);
    let ratio = psi_a / rho_a;
    let rhs = n as f64 * ratio * ratio * libm::pow(rho_a + ratio * dn, n as f64 - 1.0) * dn;
    (lhs, rhs)
}

/// Whether the perturbation bound holds, with `1e-12` absolute slack.
pub fn power_perturbation_check(a: &DMatrix<f64>, delta: &DMatrix<f64>, psi_a: f64, rho_a: f64, n: u32) -> bool {
    let (lhs, rhs) = power_perturbation_sides(a, delta, psi_a, rho_a, n);
    lhs <= rhs + 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_in_order() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn scalar_perturbation_by_hand() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let d = DMatrix::from_element(1, 1, 0.1);
        let (lhs, rhs) = power_perturbation_sides(&a, &d, 1.0, 0.5, 2);
        assert!((lhs - 0.11).abs() < 1e-12);
        assert!((rhs - 0.56).abs() < 1e-12);
        assert!(power_perturbation_check(&a, &DMatrix::zeros(1, 1), 1.0, 0.5, 3));
    }

    #[test]
    fn blocks_of_a_block_diagonal_matrix() {
        let mut a = DMatrix::zeros(5, 5);
        a[(0, 2)] = 1.0;
        a[(3, 4)] = 1.0;
        assert_eq!(decoupled_blocks(&a), vec![vec![0, 2], vec![1], vec![3, 4]]);
    }
}
