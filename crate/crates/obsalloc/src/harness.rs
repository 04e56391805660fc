//! Error-vs-horizon sweeps and end-to-end allocation runs on a fixed model.

use std::fmt::Write as _;
use std::time::Instant;

use obsalloc_core::allocation::{AllocationResult, GreedyOptions, RankEstimator, RankSource};
use obsalloc_core::linsys::{markov_parameters, SystemModel};
use obsalloc_core::measurement::{cyclic_schedule, cyclic_schedule_restricted, Schedule};
use obsalloc_core::sysid::{markov_error, recover_ab, MarkovEstimate, DEFAULT_RANK_TOL};
use obsalloc_core::{Error, Result};
use rayon::prelude::*;

use crate::formats::sig17;
use crate::parallel;

pub const SWEEP_HEADER: &str = "K,T,s_min,s_max,seed,error,wall_time_s";

/// Horizons used when a sweep does not name its own.
pub const DEFAULT_HORIZONS: [usize; 5] = [1250, 2500, 5000, 10000, 20000];

/// The cyclic schedule with exactly `k` trajectories of `n_bar` sensors,
/// over `accessible` when given. Fails when no repetition count `s` yields
/// `k` trajectories.
pub fn schedule_for(r: usize, accessible: Option<&[usize]>, n_bar: usize, k: usize) -> Result<Schedule> {
    let pool = accessible.map_or(r, <[usize]>::len);
    if n_bar == 0 || pool == 0 {
        return Err(Error::InvalidArgument("n_bar and the coordinate pool must be nonempty".into()));
    }
    // K = ceil(s * pool / n_bar) is nondecreasing in s
    let s = (1..=k * n_bar)
        .find(|&s| (s * pool).div_ceil(n_bar) >= k)
        .filter(|&s| (s * pool).div_ceil(n_bar) == k)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("no repetition count gives K = {k} with n_bar = {n_bar} over {pool} coordinates"))
        })?;
    match accessible {
        Some(j) => cyclic_schedule_restricted(r, j, n_bar, s),
        None => cyclic_schedule(r, n_bar, s),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub n_bar: usize,
    pub ks: Vec<usize>,
    pub horizons: Vec<usize>,
    pub d: usize,
    pub seeds: Vec<u64>,
    /// Restrict schedules to these coordinates (0-based, sorted).
    pub accessible: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub horizon: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub seed: u64,
    pub error: f64,
    pub wall_time_s: f64,
}

/// One row per `(K, T, seed)` cell: `||[G_hat - G]_I||` over the measured
/// rows. Cells run concurrently; rows come back sorted by `(K, T, seed)`.
pub fn run_error_sweep(model: &SystemModel, params: &SweepParams) -> Result<Vec<SweepRow>> {
    let truth = markov_parameters(model, params.d);
    let mut cells = Vec::new();
    for &k in &params.ks {
        let schedule = schedule_for(model.r(), params.accessible.as_deref(), params.n_bar, k)?;
        for &t in &params.horizons {
            for &seed in &params.seeds {
                cells.push((schedule.clone(), k, t, seed));
            }
        }
    }
    let mut rows = cells
        .par_iter()
        .map(|(schedule, k, t, seed)| {
            let start = Instant::now();
            let est = parallel::simulate_and_estimate(model, schedule, *t, *seed, params.d)?;
            let error = markov_error(&est, &truth, &est.stats.measured)?;
            Ok(SweepRow {
                k: *k,
                horizon: *t,
                s_min: est.stats.s_min,
                s_max: est.stats.s_max,
                seed: *seed,
                error,
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.k, r.horizon, r.seed));
    Ok(rows)
}

/// CSV text with a header line. With `omit_timing` the wall-time column is
/// written as 0 so the file depends only on the inputs.
pub fn sweep_csv(rows: &[SweepRow], omit_timing: bool) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        let wall = if omit_timing { 0.0 } else { row.wall_time_s };
        writeln!(out, "{},{},{},{},{},{},{:.6}", row.k, row.horizon, row.s_min, row.s_max, row.seed, sig17(row.error), wall)
            .expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Threshold singular values of `O(C)` built from the recovered `A_hat`.
    Direct,
    /// Threshold singular values of the Hankel matrix of the estimated rows.
    Hankel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationParams {
    pub n_bar: usize,
    pub k: usize,
    pub horizon: usize,
    pub d: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    /// Overrides the `(1 / (s_min T))^(1/4)` default.
    pub threshold: Option<f64>,
    pub lazy: bool,
    /// Candidate coordinates (0-based); defaults to the measured set.
    pub candidates: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct AllocationOutcome {
    pub estimate: MarkovEstimate,
    pub result: AllocationResult,
    pub threshold: f64,
}

/// Stage one on the cyclic schedule (restricted to `accessible` when
/// given), then greedy allocation with the chosen rank estimator.
pub fn run_allocation_experiment(
    model: &SystemModel,
    accessible: Option<&[usize]>,
    params: &AllocationParams,
) -> Result<AllocationOutcome> {
    let schedule = schedule_for(model.r(), accessible, params.n_bar, params.k)?;
    let estimate = parallel::simulate_and_estimate(model, &schedule, params.horizon, params.seed, params.d)?;
    let estimator = estimator_for(&estimate, params.estimator, params.threshold)?;
    let candidates = params.candidates.clone().unwrap_or_else(|| estimate.measured());
    let result = parallel::greedy_allocate(&estimator, &candidates, GreedyOptions { lazy: params.lazy })?;
    Ok(AllocationOutcome { threshold: estimator.threshold(), estimate, result })
}

/// Rank estimator over a stage-one estimate. The direct variant first
/// recovers `A_hat` and needs every row estimated.
pub fn estimator_for(est: &MarkovEstimate, kind: EstimatorKind, threshold: Option<f64>) -> Result<RankEstimator> {
    let source = match kind {
        EstimatorKind::Direct => RankSource::Direct { a_hat: recover_ab(est, DEFAULT_RANK_TOL)?.a_hat },
        EstimatorKind::Hankel => RankSource::Hankel { markov: est.restrict(&est.measured())? },
    };
    match threshold {
        Some(t) => RankEstimator::new(source, t),
        None => RankEstimator::from_stage_one(source, est.stats.s_min, est.horizon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_for_finds_repetition() {
        let s = schedule_for(20, None, 5, 16).unwrap();
        assert_eq!((s.len(), s.s()), (16, 4));
        let j: Vec<usize> = (0..20).filter(|i| i % 4 != 3).collect();
        let s = schedule_for(20, Some(&j), 5, 12).unwrap();
        assert_eq!((s.len(), s.s()), (12, 4));
        assert!(schedule_for(20, None, 5, 5).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = [SweepRow { k: 4, horizon: 100, s_min: 1, s_max: 1, seed: 3, error: 0.5, wall_time_s: 1.25 }];
        assert_eq!(sweep_csv(&rows, false), "K,T,s_min,s_max,seed,error,wall_time_s\n4,100,1,1,3,5.0000000000000000e-1,1.250000\n");
        assert!(sweep_csv(&rows, true).ends_with(",0.000000\n"));
    }
}
