//! Stage two: greedy sensor allocation driven by a thresholded rank
//! estimate.
//!
//! Two estimators are available. The direct one forms the observability
//! matrix `O(C) = [C; C A; ...; C A^{r-1}]` from an estimated `A`. The Hankel
//! one never needs `A`: it arranges the estimated Markov rows `C A^{i+j} B`
//! into the block Hankel matrix `H(C)`, whose rank equals that of `O(C)` for
//! controllable systems. Either way the rank is the number of singular
//! values above a threshold, by default `(1 / (s_min T))^(1/4)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::linalg;
use crate::measurement::MeasurementMatrix;
use crate::sysid::{self, MarkovRows};
use crate::{Error, Result};

/// `O(C)`, `|C| r x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityMatrix(pub DMatrix<f64>);

/// `H(C)`, `|C| r x m (r + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix(pub DMatrix<f64>);

pub fn observability_matrix(a: &DMatrix<f64>, c: &MeasurementMatrix) -> Result<ObservabilityMatrix> {
    let r = a.nrows();
    if a.ncols() != r {
        return Err(Error::DimensionMismatch("A must be square".into()));
    }
    if c.r() != r {
        return Err(Error::DimensionMismatch(format!("C is over {} coordinates, A is {r} x {r}", c.r())));
    }
    if c.is_empty() {
        return Err(Error::InvalidArgument("observability matrix of an empty measurement".into()));
    }
    let mut blocks = Vec::with_capacity(r);
    let mut ca = c.select(&DMatrix::identity(r, r));
    for _ in 0..r {
        let next = &ca * a;
        blocks.push(core::mem::replace(&mut ca, next));
    }
    Ok(ObservabilityMatrix(linalg::vstack(&blocks)))
}

/// Block `(i, j) = C G_{i+j}` for `i < r`, `j <= r`, built from stored
/// Markov rows.
pub fn hankel_matrix(markov: &MarkovRows, c: &MeasurementMatrix) -> Result<HankelMatrix> {
    let r = markov.r;
    if markov.d() + 1 < 2 * r {
        return Err(Error::InvalidArgument(format!(
            "Hankel matrix needs Markov blocks up to index {}, have {}",
            2 * r - 1,
            markov.d()
        )));
    }
    if c.r() != r {
        return Err(Error::DimensionMismatch(format!("C is over {} coordinates, system has {r}", c.r())));
    }
    let positions = c
        .coords()
        .iter()
        .map(|&i| markov.position(i).ok_or(Error::UnestimatedRow { coord: i }))
        .collect::<Result<Vec<_>>>()?;
    Ok(HankelMatrix(sysid::block_hankel(&markov.blocks, &positions, r, r + 1)))
}

/// Where the estimated rank comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RankSource {
    Direct { a_hat: DMatrix<f64> },
    Hankel { markov: MarkovRows },
}

/// `(1 / (s_min T))^(1/4)`.
pub fn default_threshold(s_min: usize, horizon: usize) -> f64 {
    libm::pow(1.0 / (s_min as f64 * horizon as f64), 0.25)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEstimator {
    source: RankSource,
    threshold: f64,
    /// `(s_min, T)` of the stage-one run that produced the estimate, if known.
    provenance: Option<(usize, usize)>,
}

impl RankEstimator {
    pub fn new(source: RankSource, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
        }
        if let RankSource::Hankel { markov } = &source {
            if markov.d() + 1 < 2 * markov.r {
                return Err(Error::InvalidArgument(format!(
                    "Hankel estimator needs d >= 2r - 1 = {}, got {}",
                    2 * markov.r - 1,
                    markov.d()
                )));
            }
        }
        if let RankSource::Direct { a_hat } = &source {
            if a_hat.nrows() != a_hat.ncols() || a_hat.nrows() == 0 {
                return Err(Error::DimensionMismatch("A_hat must be square and nonempty".into()));
            }
        }
        Ok(RankEstimator { source, threshold, provenance: None })
    }

    /// Uses the default threshold derived from the stage-one run.
    pub fn from_stage_one(source: RankSource, s_min: usize, horizon: usize) -> Result<Self> {
        if s_min == 0 || horizon == 0 {
            return Err(Error::InvalidArgument("s_min and T must be positive".into()));
        }
        let mut est = Self::new(source, default_threshold(s_min, horizon))?;
        est.provenance = Some((s_min, horizon));
        Ok(est)
    }

    pub fn direct(a_hat: DMatrix<f64>, threshold: f64) -> Result<Self> {
        Self::new(RankSource::Direct { a_hat }, threshold)
    }

    pub fn hankel(markov: MarkovRows, threshold: f64) -> Result<Self> {
        Self::new(RankSource::Hankel { markov }, threshold)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn provenance(&self) -> Option<(usize, usize)> {
        self.provenance
    }

    pub fn source(&self) -> &RankSource {
        &self.source
    }

    /// State dimension of the system being allocated.
    pub fn r(&self) -> usize {
        match &self.source {
            RankSource::Direct { a_hat } => a_hat.nrows(),
            RankSource::Hankel { markov } => markov.r,
        }
    }

    /// Coordinates this estimator can be queried on, if restricted.
    pub fn available(&self) -> Option<&[usize]> {
        match &self.source {
            RankSource::Direct { .. } => None,
            RankSource::Hankel { markov } => Some(&markov.rows),
        }
    }

    /// The matrix whose singular values are thresholded.
    pub fn matrix(&self, c: &MeasurementMatrix) -> Result<DMatrix<f64>> {
        match &self.source {
            RankSource::Direct { a_hat } => observability_matrix(a_hat, c).map(|o| o.0),
            RankSource::Hankel { markov } => hankel_matrix(markov, c).map(|h| h.0),
        }
    }

    /// Number of singular values strictly above the threshold; the empty
    /// allocation has rank 0.
    pub fn estimate_rank(&self, c: &MeasurementMatrix) -> Result<usize> {
        if c.is_empty() {
            if c.r() != self.r() {
                return Err(Error::DimensionMismatch("measurement dimension differs from system".into()));
            }
            return Ok(0);
        }
        Ok(linalg::count_above(&self.matrix(c)?, self.threshold))
    }
}

/// One round of the greedy loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyStep {
    pub selected: usize,
    /// Estimated rank after adding `selected`.
    pub rank: usize,
    /// Rank gain of every candidate evaluated this round.
    pub gains: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationResult {
    /// Sensors in selection order.
    pub allocation: MeasurementMatrix,
    pub trace: Vec<GreedyStep>,
    pub achieved_rank: usize,
}

impl AllocationResult {
    pub fn n_hat(&self) -> usize {
        self.allocation.len()
    }

    /// Dense 0/1 `n_hat x r` matrix, rows in selection order.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.allocation.to_dense()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GreedyOptions {
    /// Lazy evaluation: reuse last round's gains as upper bounds and only
    /// refresh the current leader. Selects the same sequence as the eager
    /// loop whenever the estimated rank is submodular.
    pub lazy: bool,
}

/// Greedy allocation with sequential gain evaluation.
pub fn greedy_allocate(
    estimator: &RankEstimator,
    candidates: &[usize],
    opts: GreedyOptions,
) -> Result<AllocationResult> {
    greedy_allocate_with(estimator, candidates, opts, |queries| {
        queries.iter().map(|c| estimator.estimate_rank(c)).collect()
    })
}

/// Greedy allocation with a caller-supplied batch evaluator, which must
/// return `estimator.estimate_rank(q)` for every query in order. Lets callers
/// fan a round's candidate evaluations out to worker threads.
///
/// Each round adds the candidate with the largest rank gain, ties going to
/// the smallest coordinate, until the estimated rank reaches `r`.
pub fn greedy_allocate_with<F>(
    estimator: &RankEstimator,
    candidates: &[usize],
    opts: GreedyOptions,
    mut evaluate: F,
) -> Result<AllocationResult>
where
    F: FnMut(&[MeasurementMatrix]) -> Vec<Result<usize>>,
{
    let r = estimator.r();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate set is empty".into()));
    }
    let mut pool: Vec<usize> = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() != candidates.len() {
        return Err(Error::InvalidArgument("candidate set has duplicates".into()));
    }
    for &i in &pool {
        if i >= r {
            return Err(Error::CoordinateOutOfRange { coord: i, r });
        }
        if let Some(avail) = estimator.available() {
            if !avail.contains(&i) {
                return Err(Error::UnestimatedRow { coord: i });
            }
        }
    }

    let mut current = MeasurementMatrix::empty(r);
    let mut rank = estimator.estimate_rank(&current)?;
    let mut trace = Vec::new();
    // Upper bounds on gains for lazy mode, indexed like `pool`.
    let mut bounds: Vec<Option<usize>> = alloc::vec![None; pool.len()];

    while rank < r {
        let open: Vec<usize> = (0..pool.len()).filter(|&k| !current.contains(pool[k])).collect();
        let mut gains = BTreeMap::new();
        let choice = if opts.lazy && bounds.iter().any(Option::is_some) {
            let mut fresh = alloc::vec![false; pool.len()];
            loop {
                // leader by (bound desc, coordinate asc); unbounded counts as r
                let lead = *open
                    .iter()
                    .max_by(|&&x, &&y| {
                        let bx = bounds[x].unwrap_or(r);
                        let by = bounds[y].unwrap_or(r);
                        bx.cmp(&by).then(y.cmp(&x))
                    })
                    .ok_or(Error::NotObservableWithinCandidates { rank, r })?;
                if fresh[lead] {
                    break lead;
                }
                let query = current.with(pool[lead])?;
                let got = evaluate(core::slice::from_ref(&query)).pop().expect("one result")?;
                let gain = got.saturating_sub(rank);
                bounds[lead] = Some(gain);
                fresh[lead] = true;
                gains.insert(pool[lead], gain);
            }
        } else {
            let queries = open.iter().map(|&k| current.with(pool[k])).collect::<Result<Vec<_>>>()?;
            let ranks = evaluate(&queries);
            if ranks.len() != queries.len() {
                return Err(Error::InvalidArgument("evaluator returned wrong number of ranks".into()));
            }
            let mut best: Option<(usize, usize)> = None;
            for (&k, got) in open.iter().zip(ranks) {
                let gain = got?.saturating_sub(rank);
                bounds[k] = Some(gain);
                gains.insert(pool[k], gain);
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some((k, gain));
                }
            }
            match best {
                Some((k, _)) => k,
                None => return Err(Error::NotObservableWithinCandidates { rank, r }),
            }
        };

        let gain = bounds[choice].unwrap_or(0);
        if gain == 0 {
            return Err(Error::NotObservableWithinCandidates { rank, r });
        }
        current = current.with(pool[choice])?;
        rank += gain;
        trace.push(GreedyStep { selected: pool[choice], rank, gains });
    }
    Ok(AllocationResult { allocation: current, trace, achieved_rank: rank })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_allocation_has_rank_zero() {
        let est = RankEstimator::direct(DMatrix::identity(3, 3), 0.5).unwrap();
        assert_eq!(est.estimate_rank(&MeasurementMatrix::empty(3)).unwrap(), 0);
        assert!(observability_matrix(&DMatrix::identity(3, 3), &MeasurementMatrix::empty(3)).is_err());
    }

    #[test]
    fn identity_dynamics_need_every_sensor() {
        let est = RankEstimator::direct(DMatrix::identity(4, 4) * 0.5, 1e-6).unwrap();
        let res = greedy_allocate(&est, &[0, 1, 2, 3], GreedyOptions::default()).unwrap();
        assert_eq!(res.allocation.coords(), &[0, 1, 2, 3]);
        for step in &res.trace {
            assert!(step.gains.values().all(|&g| g == 1));
        }
    }

    #[test]
    fn threshold_must_be_positive() {
        assert!(RankEstimator::direct(DMatrix::identity(2, 2), 0.0).is_err());
        assert!(RankEstimator::direct(DMatrix::identity(2, 2), f64::NAN).is_err());
    }

    #[test]
    fn default_threshold_value() {
        let t = default_threshold(4, 20000);
        assert!((t - (1.0f64 / 80000.0).powf(0.25)).abs() < 1e-15);
    }
}
