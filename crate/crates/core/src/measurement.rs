//! Measurement matrices and cyclic data-collection schedules.
//!
//! A measurement matrix is stored as the ordered list of coordinates its
//! one-hot rows select. Coordinates are 0-based here; the file formats use
//! 1-based indices and convert at the IO boundary.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::{Error, Result};

/// Rows `e_i^T` for each selected coordinate `i`, in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MeasurementMatrix {
    r: usize,
    coords: Vec<usize>,
}

impl MeasurementMatrix {
    /// Builds a measurement matrix from 0-based coordinates. Rejects
    /// duplicates and out-of-range indices; an empty list is allowed.
    pub fn new(r: usize, coords: Vec<usize>) -> Result<Self> {
        for (k, &c) in coords.iter().enumerate() {
            if c >= r {
                return Err(Error::CoordinateOutOfRange { coord: c, r });
            }
            if coords[..k].contains(&c) {
                return Err(Error::InvalidArgument(format!("coordinate {c} repeated")));
            }
        }
        Ok(MeasurementMatrix { r, coords })
    }

    /// Builds a measurement matrix from 1-based coordinates.
    pub fn from_one_based(r: usize, coords: &[usize]) -> Result<Self> {
        let zero = coords
            .iter()
            .map(|&c| {
                if c == 0 || c > r {
                    Err(Error::CoordinateOutOfRange { coord: c.wrapping_sub(1), r })
                } else {
                    Ok(c - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(r, zero)
    }

    /// The empty allocation `R^{0 x r}`.
    pub fn empty(r: usize) -> Self {
        MeasurementMatrix { r, coords: Vec::new() }
    }

    /// Measures every coordinate once.
    pub fn full(r: usize) -> Self {
        MeasurementMatrix { r, coords: (0..r).collect() }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.coords.iter().map(|c| c + 1).collect()
    }

    /// Number of sensors (rows).
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn contains(&self, coord: usize) -> bool {
        self.coords.contains(&coord)
    }

    /// Position of `coord` among the rows, if measured.
    pub fn position(&self, coord: usize) -> Option<usize> {
        self.coords.iter().position(|&c| c == coord)
    }

    /// Appends one sensor, returning a new matrix.
    pub fn with(&self, coord: usize) -> Result<Self> {
        let mut coords = self.coords.clone();
        coords.push(coord);
        Self::new(self.r, coords)
    }

    /// Dense `len x r` 0/1 matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.coords.len(), self.r);
        for (row, &c) in self.coords.iter().enumerate() {
            m[(row, c)] = 1.0;
        }
        m
    }

    /// `C x` for a state vector (or `C X` column-wise).
    pub fn select(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        crate::linalg::select_rows(x, &self.coords)
    }
}

/// The per-trajectory measurement matrices used for data collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    r: usize,
    n_bar: usize,
    s: usize,
    matrices: Vec<MeasurementMatrix>,
}

impl Schedule {
    /// Assembles a schedule from explicit matrices, checking that every one
    /// has exactly `n_bar` sensors over the same state dimension.
    pub fn new(r: usize, n_bar: usize, s: usize, matrices: Vec<MeasurementMatrix>) -> Result<Self> {
        for (k, m) in matrices.iter().enumerate() {
            if m.r() != r {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {k} has state dimension {}, schedule has {r}",
                    m.r()
                )));
            }
            if m.len() != n_bar {
                return Err(Error::InvalidArgument(format!(
                    "matrix {k} has {} sensors, expected {n_bar}",
                    m.len()
                )));
            }
        }
        Ok(Schedule { r, n_bar, s, matrices })
    }

    pub fn r(&self) -> usize {
        self.r
    }
    pub fn n_bar(&self) -> usize {
        self.n_bar
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn matrices(&self) -> &[MeasurementMatrix] {
        &self.matrices
    }
    /// Number of trajectories `K`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// Cyclic schedule over all coordinates: `K = ceil(s r / n_bar)` matrices,
/// matrix `k` measuring the next `n_bar` coordinates modulo `r`.
pub fn cyclic_schedule(r: usize, n_bar: usize, s: usize) -> Result<Schedule> {
    let all: Vec<usize> = (0..r).collect();
    cyclic_over(r, &all, n_bar, s)
}

/// Cyclic schedule restricted to the accessible coordinates (0-based,
/// sorted, distinct): `K = ceil(s |J| / n_bar)`.
pub fn cyclic_schedule_restricted(r: usize, accessible: &[usize], n_bar: usize, s: usize) -> Result<Schedule> {
    if accessible.is_empty() {
        return Err(Error::InvalidArgument("accessible set is empty".into()));
    }
    for (k, &j) in accessible.iter().enumerate() {
        if j >= r {
            return Err(Error::CoordinateOutOfRange { coord: j, r });
        }
        if k > 0 && accessible[k - 1] >= j {
            return Err(Error::InvalidArgument("accessible set must be sorted and distinct".into()));
        }
    }
    cyclic_over(r, accessible, n_bar, s)
}

fn cyclic_over(r: usize, pool: &[usize], n_bar: usize, s: usize) -> Result<Schedule> {
    if n_bar == 0 {
        return Err(Error::InvalidArgument("n_bar must be at least 1".into()));
    }
    if n_bar > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "n_bar = {n_bar} exceeds the {} coordinates available",
            pool.len()
        )));
    }
    if s == 0 {
        return Err(Error::InvalidArgument("repetition s must be at least 1".into()));
    }
    let k_count = (s * pool.len()).div_ceil(n_bar);
    let matrices = (0..k_count)
        .map(|k| {
            let coords = (k * n_bar..(k + 1) * n_bar).map(|a| pool[a % pool.len()]).collect();
            MeasurementMatrix::new(r, coords)
        })
        .collect::<Result<Vec<_>>>()?;
    Schedule::new(r, n_bar, s, matrices)
}

/// How often each coordinate is measured across a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageStats {
    pub counts: Vec<usize>,
    /// Coordinates with a nonzero count, ascending.
    pub measured: Vec<usize>,
    /// Minimum nonzero count; 0 when nothing is measured.
    pub s_min: usize,
    /// Maximum count; 0 when nothing is measured.
    pub s_max: usize,
}

pub fn coverage(schedule: &Schedule) -> CoverageStats {
    coverage_of(schedule.r(), schedule.matrices())
}

pub(crate) fn coverage_of(r: usize, matrices: &[MeasurementMatrix]) -> CoverageStats {
    let mut counts = vec![0usize; r];
    for m in matrices {
        for &c in m.coords() {
            counts[c] += 1;
        }
    }
    let measured: Vec<usize> = (0..r).filter(|&i| counts[i] > 0).collect();
    let s_min = measured.iter().map(|&i| counts[i]).min().unwrap_or(0);
    let s_max = measured.iter().map(|&i| counts[i]).max().unwrap_or(0);
    CoverageStats { counts, measured, s_min, s_max }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(s: &Schedule) -> Vec<Vec<usize>> {
        s.matrices().iter().map(|m| m.one_based()).collect()
    }

    #[test]
    fn exact_division() {
        let s = cyclic_schedule(4, 2, 1).unwrap();
        assert_eq!(one_based(&s), vec![vec![1, 2], vec![3, 4]]);
        assert_eq!(coverage(&s).counts, vec![1, 1, 1, 1]);
    }

    #[test]
    fn wraps_cyclically() {
        let s = cyclic_schedule(3, 2, 1).unwrap();
        assert_eq!(one_based(&s), vec![vec![1, 2], vec![3, 1]]);
        let cov = coverage(&s);
        assert_eq!(cov.counts, vec![2, 1, 1]);
        assert_eq!((cov.s_min, cov.s_max), (1, 2));
    }

    #[test]
    fn model_one_schedule() {
        let s = cyclic_schedule(20, 5, 4).unwrap();
        assert_eq!(s.len(), 16);
        let cov = coverage(&s);
        assert!(cov.counts.iter().all(|&c| c == 4));
        assert_eq!((cov.s_min, cov.s_max), (4, 4));
    }

    #[test]
    fn restricted_schedules() {
        let s = cyclic_schedule_restricted(4, &[0, 2], 1, 1).unwrap();
        assert_eq!(one_based(&s), vec![vec![1], vec![3]]);

        let s = cyclic_schedule_restricted(5, &[0, 1, 2], 2, 1).unwrap();
        assert_eq!(one_based(&s), vec![vec![1, 2], vec![3, 1]]);
        assert_eq!(coverage(&s).counts, vec![2, 1, 1, 0, 0]);

        let j: Vec<usize> = (0..20).filter(|i| (i + 1) % 4 != 0).collect();
        let s = cyclic_schedule_restricted(20, &j, 5, 4).unwrap();
        assert_eq!(s.len(), 12);
        let cov = coverage(&s);
        for i in 0..20 {
            assert_eq!(cov.counts[i], if j.contains(&i) { 4 } else { 0 });
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(cyclic_schedule(3, 4, 1).is_err());
        assert!(cyclic_schedule(3, 0, 1).is_err());
        assert!(cyclic_schedule(3, 1, 0).is_err());
        assert!(cyclic_schedule_restricted(5, &[1, 3], 3, 1).is_err());
        assert!(cyclic_schedule_restricted(5, &[3, 1], 1, 1).is_err());
        assert!(MeasurementMatrix::new(3, vec![0, 0]).is_err());
        assert!(MeasurementMatrix::from_one_based(3, &[0]).is_err());
        assert!(MeasurementMatrix::from_one_based(3, &[4]).is_err());
    }

    #[test]
    fn empty_schedule_coverage() {
        let s = Schedule::new(3, 1, 1, Vec::new()).unwrap();
        let cov = coverage(&s);
        assert_eq!(cov.counts, vec![0, 0, 0]);
        assert!(cov.measured.is_empty());
        assert_eq!((cov.s_min, cov.s_max), (0, 0));
    }
}
