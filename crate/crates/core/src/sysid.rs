//! Stage one: Markov parameters from partially observed trajectories.
//!
//! Every trajectory measures a subset of the state coordinates. Row `i` of
//! `G = [B, AB, ..., A^d B]` only couples to observations of coordinate `i`,
//! so the joint least-squares problem splits into one normal-equation solve
//! per measured coordinate, over the trajectories that measure it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{self, SortedSvd};
use crate::measurement::{self, CoverageStats, MeasurementMatrix, Schedule};
use crate::linsys::TrajectoryData;
use crate::{Error, Result};

/// Normal equations whose condition estimate exceeds this are solved by SVD.
pub const CHOLESKY_CONDITION_LIMIT: f64 = 1e12;

/// Default relative pseudo-inverse tolerance used when recovering `(A, B)`.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Default required ratio `sigma_r / sigma_{r+1}` for Ho-Kalman.
pub const DEFAULT_GAP_FACTOR: f64 = 2.0;

/// Stacked past inputs `[u_t; u_{t-1}; ...; u_{t-d}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor(pub DVector<f64>);

pub fn build_regressor(traj: &TrajectoryData, d: usize, t: usize) -> Result<Regressor> {
    if t < d || t > traj.horizon {
        return Err(Error::InvalidArgument(format!(
            "regressor time {t} outside [{d}, {}]",
            traj.horizon
        )));
    }
    let m = traj.inputs.nrows();
    let mut v = DVector::zeros(m * (d + 1));
    for lag in 0..=d {
        v.rows_mut(lag * m, m).copy_from(&traj.inputs.column(t - lag));
    }
    Ok(Regressor(v))
}

/// Sufficient statistics of one trajectory for the least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMoments {
    pub measurement: MeasurementMatrix,
    /// `sum_t U_t U_t^T` over `t = d..=T`, `m(d+1)` square.
    pub gram: DMatrix<f64>,
    /// `sum_t y_{t+1} U_t^T`, one row per sensor.
    pub cross: DMatrix<f64>,
    pub horizon: usize,
}

/// Accumulates the Gram and cross moments of one trajectory.
///
/// The Gram matrix is block Toeplitz up to boundary terms: block `(a+1, b+1)`
/// equals block `(a, b)` plus `u_{d-1-a} u_{d-1-b}^T` minus
/// `u_{T-a} u_{T-b}^T`. Only the first block row is formed by products over
/// the whole horizon; the rest follows from the recurrence.
pub fn trajectory_moments(traj: &TrajectoryData, d: usize) -> Result<TrajectoryMoments> {
    let horizon = traj.horizon;
    if horizon <= d {
        return Err(Error::InvalidArgument(format!("horizon T = {horizon} must exceed d = {d}")));
    }
    let m = traj.inputs.nrows();
    let p = m * (d + 1);
    let n = horizon - d + 1;
    let u = &traj.inputs;
    let lead = u.columns(d, n);

    let mut first_row = Vec::with_capacity(d + 1);
    for b in 0..=d {
        first_row.push(lead * u.columns(d - b, n).transpose());
    }

    let mut gram = DMatrix::zeros(p, p);
    let col = |t: usize| u.column(t).into_owned();
    for (diff, lead_block) in first_row.iter().enumerate() {
        let mut block = lead_block.clone();
        for a in 0..=(d - diff) {
            let b = a + diff;
            if a > 0 {
                let (pa, pb) = (a - 1, b - 1);
                block += linalg::outer(&col(d - 1 - pa), &col(d - 1 - pb));
                block -= linalg::outer(&col(horizon - pa), &col(horizon - pb));
            }
            gram.view_mut((a * m, b * m), (m, m)).copy_from(&block);
            if diff > 0 {
                gram.view_mut((b * m, a * m), (m, m)).copy_from(&block.transpose());
            }
        }
    }

    let targets = traj.observations.columns(d + 1, n);
    let mut cross = DMatrix::zeros(traj.measurement.len(), p);
    for b in 0..=d {
        let blk = targets * u.columns(d - b, n).transpose();
        cross.view_mut((0, b * m), blk.shape()).copy_from(&blk);
    }
    Ok(TrajectoryMoments { measurement: traj.measurement.clone(), gram, cross, horizon })
}

/// Estimated `[B, AB, ..., A^d B]`, with unmeasured rows held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovEstimate {
    pub d: usize,
    pub m: usize,
    pub r: usize,
    /// `d + 1` blocks of shape `r x m`.
    pub blocks: Vec<DMatrix<f64>>,
    /// Per-coordinate estimated flag.
    pub estimated: Vec<bool>,
    pub stats: CoverageStats,
    pub horizon: usize,
}

impl MarkovEstimate {
    /// Wraps exact Markov parameters (every row estimated).
    pub fn exact(blocks: Vec<DMatrix<f64>>, s_min: usize, horizon: usize) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::InvalidArgument("no Markov blocks".into()))?;
        let (r, m) = first.shape();
        if blocks.iter().any(|b| b.shape() != (r, m)) {
            return Err(Error::DimensionMismatch("Markov blocks differ in shape".into()));
        }
        let stats = CoverageStats {
            counts: vec![s_min; r],
            measured: (0..r).collect(),
            s_min,
            s_max: s_min,
        };
        Ok(MarkovEstimate { d: blocks.len() - 1, m, r, blocks, estimated: vec![true; r], stats, horizon })
    }

    /// Estimated coordinates, ascending.
    pub fn measured(&self) -> Vec<usize> {
        (0..self.r).filter(|&i| self.estimated[i]).collect()
    }

    /// The `r x m(d+1)` matrix `[G_0, ..., G_d]`.
    pub fn g_matrix(&self) -> DMatrix<f64> {
        linalg::hstack(&self.blocks)
    }

    /// Restricts to the given rows, all of which must be estimated.
    pub fn restrict(&self, rows: &[usize]) -> Result<MarkovRows> {
        for &i in rows {
            if i >= self.r {
                return Err(Error::CoordinateOutOfRange { coord: i, r: self.r });
            }
            if !self.estimated[i] {
                return Err(Error::UnestimatedRow { coord: i });
            }
        }
        MarkovRows::new(self.r, rows.to_vec(), self.blocks.iter().map(|b| linalg::select_rows(b, rows)).collect())
    }
}

/// Rows `[G]_J` of a Markov sequence, with the coordinates they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRows {
    /// State dimension of the underlying system.
    pub r: usize,
    /// 0-based coordinates, one per block row.
    pub rows: Vec<usize>,
    /// Blocks `[G_i]_J`, each `|J| x m`.
    pub blocks: Vec<DMatrix<f64>>,
}

impl MarkovRows {
    pub fn new(r: usize, rows: Vec<usize>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = blocks.first().map_or(0, |b| b.ncols());
        if blocks.is_empty() || m == 0 {
            return Err(Error::InvalidArgument("no Markov blocks".into()));
        }
        if blocks.iter().any(|b| b.shape() != (rows.len(), m)) {
            return Err(Error::DimensionMismatch("Markov row blocks differ in shape".into()));
        }
        MeasurementMatrix::new(r, rows.clone())?;
        Ok(MarkovRows { r, rows, blocks })
    }

    pub fn m(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Highest available block index.
    pub fn d(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Position of a coordinate among the stored rows.
    pub fn position(&self, coord: usize) -> Option<usize> {
        self.rows.iter().position(|&c| c == coord)
    }
}

/// Least-squares Markov parameters from trajectories aligned with `schedule`.
pub fn estimate_markov(schedule: &Schedule, trajectories: &[TrajectoryData], d: usize) -> Result<MarkovEstimate> {
    check_alignment(schedule, trajectories.iter().map(|t| (&t.measurement, t.horizon)))?;
    let moments = trajectories
        .iter()
        .map(|t| trajectory_moments(t, d))
        .collect::<Result<Vec<_>>>()?;
    estimate_from_moments(schedule, &moments, d)
}

fn check_alignment<'a>(
    schedule: &Schedule,
    items: impl ExactSizeIterator<Item = (&'a MeasurementMatrix, usize)>,
) -> Result<usize> {
    if items.len() != schedule.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} trajectories for {} schedule entries",
            items.len(),
            schedule.len()
        )));
    }
    let mut horizon = None;
    for (k, (meas, t)) in items.enumerate() {
        if meas != &schedule.matrices()[k] {
            return Err(Error::DimensionMismatch(format!("trajectory {k} does not use schedule matrix {k}")));
        }
        match horizon {
            None => horizon = Some(t),
            Some(h) if h != t => {
                return Err(Error::DimensionMismatch(format!("trajectory {k} has horizon {t}, expected {h}")));
            }
            _ => {}
        }
    }
    horizon.ok_or_else(|| Error::InvalidArgument("no trajectories".into()))
}

/// Solves the per-coordinate normal equations from precomputed moments.
///
/// Moments are summed in trajectory-index order, so the result does not
/// depend on how the moments were produced. Coordinates measured by the
/// same set of trajectories share one factorization.
pub fn estimate_from_moments(schedule: &Schedule, moments: &[TrajectoryMoments], d: usize) -> Result<MarkovEstimate> {
    let horizon = check_alignment(schedule, moments.iter().map(|mo| (&mo.measurement, mo.horizon)))?;
    if horizon <= d {
        return Err(Error::InvalidArgument(format!("horizon T = {horizon} must exceed d = {d}")));
    }
    let r = schedule.r();
    let p = moments[0].gram.nrows();
    if !p.is_multiple_of(d + 1) || moments.iter().any(|mo| mo.gram.nrows() != p) {
        return Err(Error::DimensionMismatch("moments disagree on regressor length".into()));
    }
    let m = p / (d + 1);

    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for i in 0..r {
        let ks: Vec<usize> = (0..moments.len()).filter(|&k| moments[k].measurement.contains(i)).collect();
        if !ks.is_empty() {
            groups.entry(ks).or_default().push(i);
        }
    }

    let mut g = DMatrix::zeros(r, p);
    for (ks, coords) in &groups {
        let mut gram = DMatrix::zeros(p, p);
        for &k in ks {
            gram += &moments[k].gram;
        }
        let mut rhs = DMatrix::zeros(p, coords.len());
        for (col, &i) in coords.iter().enumerate() {
            for &k in ks {
                let row = moments[k].measurement.position(i).expect("k measures i");
                let cross = moments[k].cross.row(row).transpose();
                let mut target = rhs.column_mut(col);
                target += cross;
            }
        }
        let sol = solve_spd(gram, rhs).map_err(|_| Error::SingularGram { coord: coords[0] })?;
        for (col, &i) in coords.iter().enumerate() {
            g.set_row(i, &sol.column(col).transpose());
        }
    }

    let blocks = (0..=d).map(|j| g.columns(j * m, m).into_owned()).collect();
    let stats = measurement::coverage(schedule);
    let estimated = (0..r).map(|i| stats.counts[i] > 0).collect();
    Ok(MarkovEstimate { d, m, r, blocks, estimated, stats, horizon })
}

/// Solves `gram * X = rhs` for symmetric positive (semi)definite `gram`.
fn solve_spd(gram: DMatrix<f64>, rhs: DMatrix<f64>) -> core::result::Result<DMatrix<f64>, ()> {
    let n = gram.nrows();
    if let Some(chol) = Cholesky::new(gram.clone()) {
        let l = chol.l_dirty();
        let diag = (0..n).map(|i| l[(i, i)]);
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > 0.0 && (hi / lo) * (hi / lo) <= CHOLESKY_CONDITION_LIMIT {
            return Ok(chol.solve(&rhs));
        }
    }
    let svd = SortedSvd::new(&gram);
    let max = svd.sigma.first().copied().unwrap_or(0.0);
    let min = svd.sigma.last().copied().unwrap_or(0.0);
    if max <= 0.0 || min <= n as f64 * f64::EPSILON * max {
        return Err(());
    }
    let ut_rhs = svd.u.transpose() * rhs;
    let scaled = DMatrix::from_fn(ut_rhs.nrows(), ut_rhs.ncols(), |i, j| ut_rhs[(i, j)] / svd.sigma[i]);
    Ok(svd.v_t.transpose() * scaled)
}

/// Whether recovered matrices live in the original coordinates or only
/// match up to an invertible change of basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    CoordinateExact,
    UpToSimilarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSystem {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    /// Output map of the realization for the rows it was built from; only
    /// produced by Ho-Kalman.
    pub c_hat: Option<DMatrix<f64>>,
    pub rank_used: usize,
    pub similarity: Similarity,
}

/// Recovers `(A, B)` from a fully estimated `G` with `d >= r`:
/// `A = G^+ (G^-)^dagger`, `B` = first block of `G^-`.
pub fn recover_ab(est: &MarkovEstimate, rank_tol: f64) -> Result<RecoveredSystem> {
    let (r, m, d) = (est.r, est.m, est.d);
    if d < r {
        return Err(Error::InvalidArgument(format!("recovery needs d >= r, got d = {d}, r = {r}")));
    }
    if let Some(i) = (0..r).find(|&i| !est.estimated[i]) {
        return Err(Error::UnestimatedRow { coord: i });
    }
    let g = est.g_matrix();
    let g_minus = g.columns(0, m * d).into_owned();
    let g_plus = g.columns(m, m * d).into_owned();
    let (pinv, rank) = linalg::pseudo_inverse(&g_minus, rank_tol);
    if rank < r {
        return Err(Error::RankDeficient { rank, required: r });
    }
    Ok(RecoveredSystem {
        a_hat: g_plus * pinv,
        b_hat: g_minus.columns(0, m).into_owned(),
        c_hat: None,
        rank_used: rank,
        similarity: Similarity::CoordinateExact,
    })
}

/// Block Hankel matrix with `block_rows x block_cols` blocks, block `(i, j)`
/// being `blocks[i + j]` restricted to the given row positions.
pub(crate) fn block_hankel(
    blocks: &[DMatrix<f64>],
    row_positions: &[usize],
    block_rows: usize,
    block_cols: usize,
) -> DMatrix<f64> {
    let m = blocks[0].ncols();
    let c = row_positions.len();
    let mut h = DMatrix::zeros(c * block_rows, m * block_cols);
    for i in 0..block_rows {
        for j in 0..block_cols {
            let blk = &blocks[i + j];
            for (row, &pos) in row_positions.iter().enumerate() {
                h.view_mut((i * c + row, j * m), (1, m)).copy_from(&blk.row(pos));
            }
        }
    }
    h
}

/// Ho-Kalman realization from Markov rows `[G]_J` with `d >= 2r - 1`.
///
/// The Hankel matrix `H(I_J)` (`r` block rows, `r + 1` block columns) is
/// truncated to rank `r`; with `H = U S V^T`, `R = S^{1/2} V^T`, `A` solves
/// the shift `R^+ = A R^-` and `B` is the first block column of `R^-`. The
/// output map `C = [U S^{1/2}]` restricted to the first block row is kept in
/// [`RecoveredSystem::c_hat`]. The rank-`r` gap `sigma_r / sigma_{r+1}` must
/// reach `gap_factor`.
pub fn ho_kalman(rows: &MarkovRows, r: usize, rank_tol: f64, gap_factor: f64) -> Result<RecoveredSystem> {
    if r == 0 {
        return Err(Error::InvalidArgument("state dimension must be positive".into()));
    }
    if rows.d() + 1 < 2 * r {
        return Err(Error::InvalidArgument(format!(
            "Ho-Kalman needs d >= 2r - 1 = {}, got d = {}",
            2 * r - 1,
            rows.d()
        )));
    }
    if rows.rows.is_empty() {
        return Err(Error::InvalidArgument("no measured rows".into()));
    }
    let m = rows.m();
    let positions: Vec<usize> = (0..rows.rows.len()).collect();
    let h = block_hankel(&rows.blocks, &positions, r, r + 1);
    let svd = SortedSvd::new(&h);
    let sigma = &svd.sigma;
    let rank = linalg::rank_of(sigma, rank_tol);
    if rank < r {
        return Err(Error::RankDeficient { rank, required: r });
    }
    let next = sigma.get(r).copied().unwrap_or(0.0);
    let ratio = if next > 0.0 { sigma[r - 1] / next } else { f64::INFINITY };
    if ratio < gap_factor {
        return Err(Error::RankGap { r, ratio, required: gap_factor });
    }

    let sqrt_s: Vec<f64> = sigma[..r].iter().map(|&s| libm::sqrt(s)).collect();
    let realization = DMatrix::from_fn(r, h.ncols(), |i, j| sqrt_s[i] * svd.v_t[(i, j)]);
    let obs = DMatrix::from_fn(h.nrows(), r, |i, j| svd.u[(i, j)] * sqrt_s[j]);
    let r_minus = realization.columns(0, r * m).into_owned();
    let r_plus = realization.columns(m, r * m).into_owned();
    let (pinv, used) = linalg::pseudo_inverse(&r_minus, rank_tol);
    if used < r {
        return Err(Error::RankDeficient { rank: used, required: r });
    }
    Ok(RecoveredSystem {
        a_hat: r_plus * pinv,
        b_hat: r_minus.columns(0, m).into_owned(),
        c_hat: Some(obs.rows(0, rows.rows.len()).into_owned()),
        rank_used: used,
        similarity: Similarity::UpToSimilarity,
    })
}

/// Spectral norm of `[G_hat - G]` restricted to the given rows.
pub fn markov_error(est: &MarkovEstimate, truth: &[DMatrix<f64>], rows: &[usize]) -> Result<f64> {
    if truth.len() != est.blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true blocks for {} estimated",
            truth.len(),
            est.blocks.len()
        )));
    }
    if truth.iter().any(|b| b.shape() != (est.r, est.m)) {
        return Err(Error::DimensionMismatch("true Markov block shape differs".into()));
    }
    for &i in rows {
        if i >= est.r {
            return Err(Error::CoordinateOutOfRange { coord: i, r: est.r });
        }
        if !est.estimated[i] {
            return Err(Error::UnestimatedRow { coord: i });
        }
    }
    let diff = est.g_matrix() - linalg::hstack(truth);
    Ok(linalg::spectral_norm(&linalg::select_rows(&diff, rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{self, SystemModel};
    use crate::measurement::cyclic_schedule;

    #[test]
    fn regressor_stacks_descending() {
        let meas = MeasurementMatrix::full(1);
        let inputs = DMatrix::identity(3, 3);
        let traj = TrajectoryData::new(meas, inputs, DMatrix::zeros(1, 4), 0, 0).unwrap();
        let reg = build_regressor(&traj, 2, 2).unwrap();
        let expected = [0., 0., 1., 0., 1., 0., 1., 0., 0.];
        assert_eq!(reg.0.as_slice(), &expected);
        assert_eq!(build_regressor(&traj, 0, 1).unwrap().0.as_slice(), &[0., 1., 0.]);
        assert!(build_regressor(&traj, 2, 1).is_err());
        assert!(build_regressor(&traj, 0, 3).is_err());
    }

    #[test]
    fn moments_match_direct_sums() {
        let model = SystemModel::new(DMatrix::identity(3, 3) * 0.3, DMatrix::from_element(3, 2, 0.5), 1.0, 0.1, 0.1).unwrap();
        let meas = MeasurementMatrix::new(3, vec![2, 0]).unwrap();
        let traj = linsys::simulate_trajectory(&model, &meas, 40, 11).unwrap();
        let d = 3;
        let mo = trajectory_moments(&traj, d).unwrap();
        let mut gram = DMatrix::zeros(8, 8);
        let mut cross = DMatrix::zeros(2, 8);
        for t in d..=40 {
            let u = build_regressor(&traj, d, t).unwrap().0;
            gram += &u * u.transpose();
            cross += traj.observations.column(t + 1) * u.transpose();
        }
        assert!((mo.gram - gram).abs().max() < 1e-10);
        assert!((mo.cross - cross).abs().max() < 1e-10);
    }

    #[test]
    fn memoryless_passthrough() {
        let model = SystemModel::noiseless(DMatrix::zeros(3, 3), DMatrix::identity(3, 3)).unwrap();
        let sched = cyclic_schedule(3, 3, 1).unwrap();
        let trajs = linsys::simulate_schedule(&model, &sched, 30, 5).unwrap();
        let est = estimate_markov(&sched, &trajs, 1).unwrap();
        assert!((&est.blocks[0] - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-10);
        assert!(est.blocks[1].abs().max() < 1e-10);
    }

    #[test]
    fn insufficient_excitation_is_reported() {
        let model = SystemModel::noiseless(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let sched = cyclic_schedule(2, 2, 1).unwrap();
        let trajs = linsys::simulate_schedule(&model, &sched, 3, 5).unwrap();
        // 2 samples for a 6-dimensional regressor
        assert!(matches!(estimate_markov(&sched, &trajs, 2), Err(Error::SingularGram { .. })));
        assert!(estimate_markov(&sched, &trajs, 3).is_err());
    }

    #[test]
    fn recover_rejects_missing_rows_and_small_d() {
        let model = SystemModel::noiseless(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2)).unwrap();
        let mut est = MarkovEstimate::exact(linsys::markov_parameters(&model, 2), 1, 100).unwrap();
        assert!(recover_ab(&est, DEFAULT_RANK_TOL).is_ok());
        let short = MarkovEstimate::exact(linsys::markov_parameters(&model, 1), 1, 100).unwrap();
        assert!(recover_ab(&short, DEFAULT_RANK_TOL).is_err());
        est.estimated[1] = false;
        assert!(matches!(recover_ab(&est, DEFAULT_RANK_TOL), Err(Error::UnestimatedRow { coord: 1 })));
    }

    #[test]
    fn scalar_ho_kalman() {
        let (a, b) = (0.6f64, -1.5f64);
        let blocks: Vec<_> = (0..4).map(|i| DMatrix::from_element(1, 1, b * a.powi(i))).collect();
        let rows = MarkovRows::new(1, vec![0], blocks).unwrap();
        let rec = ho_kalman(&rows, 1, DEFAULT_RANK_TOL, DEFAULT_GAP_FACTOR).unwrap();
        assert!((rec.a_hat[(0, 0)] - a).abs() < 1e-12);
        // balanced realization: B is only fixed up to scale, sign chosen positive
        assert!(rec.b_hat[(0, 0)] > 0.0);
        let c = rec.c_hat.unwrap();
        assert!((c[(0, 0)] * rec.b_hat[(0, 0)] - b).abs() < 1e-12);
        assert_eq!(rec.similarity, Similarity::UpToSimilarity);
    }
}
