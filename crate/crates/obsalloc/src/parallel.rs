//! Rayon-backed drivers for the core pipeline. Every reduction runs in
//! trajectory-index or candidate order, so results match the sequential
//! core routines bit for bit at any thread count.

use obsalloc_core::allocation::{greedy_allocate_with, AllocationResult, GreedyOptions, RankEstimator};
use obsalloc_core::linsys::{simulate_trajectory_at, SystemModel, TrajectoryData};
use obsalloc_core::measurement::Schedule;
use obsalloc_core::sysid::{estimate_from_moments, trajectory_moments, MarkovEstimate};
use obsalloc_core::Result;
use rayon::prelude::*;

pub fn simulate_schedule(model: &SystemModel, schedule: &Schedule, horizon: usize, seed: u64) -> Result<Vec<TrajectoryData>> {
    schedule
        .matrices()
        .par_iter()
        .enumerate()
        .map(|(k, c)| simulate_trajectory_at(model, c, horizon, seed, k as u64))
        .collect()
}

pub fn estimate_markov(schedule: &Schedule, trajectories: &[TrajectoryData], d: usize) -> Result<MarkovEstimate> {
    let moments = trajectories
        .par_iter()
        .map(|t| trajectory_moments(t, d))
        .collect::<Result<Vec<_>>>()?;
    estimate_from_moments(schedule, &moments, d)
}

/// Simulation and estimation fused per trajectory; raw samples are dropped
/// as soon as their moments are accumulated.
pub fn simulate_and_estimate(
    model: &SystemModel,
    schedule: &Schedule,
    horizon: usize,
    seed: u64,
    d: usize,
) -> Result<MarkovEstimate> {
    let moments = schedule
        .matrices()
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let traj = simulate_trajectory_at(model, c, horizon, seed, k as u64)?;
            trajectory_moments(&traj, d)
        })
        .collect::<Result<Vec<_>>>()?;
    estimate_from_moments(schedule, &moments, d)
}

/// Greedy allocation with each round's candidate ranks evaluated in
/// parallel.
pub fn greedy_allocate(estimator: &RankEstimator, candidates: &[usize], opts: GreedyOptions) -> Result<AllocationResult> {
    greedy_allocate_with(estimator, candidates, opts, |queries| {
        queries.par_iter().map(|c| estimator.estimate_rank(c)).collect()
    })
}
