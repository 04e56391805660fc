//! Benchmark systems: a block-cyclic permutation system with every
//! coordinate accessible, and a 20-zone thermal (HVAC) network where the
//! last zone of every block cannot host a sensor.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::linsys::SystemModel;
use crate::{Error, Result};

/// Number of decoupled blocks in both benchmark systems.
pub const BLOCKS: usize = 5;
/// Coordinates per block.
pub const BLOCK_SIZE: usize = 4;
/// State (and input) dimension of both benchmark systems.
pub const DIM: usize = BLOCKS * BLOCK_SIZE;

/// 0-based block index of a coordinate.
pub fn block_of(coord: usize) -> usize {
    coord / BLOCK_SIZE
}

/// `A = 0.9 (I_5 kron S)` with `S = [e_2 e_3 e_4 e_1]`, `B = I_20`, unit
/// variances.
pub fn build_model1() -> SystemModel {
    build_model1_with_variances(1.0, 1.0, 1.0).expect("unit variances are valid")
}

pub fn build_model1_with_variances(sigma_u2: f64, sigma_w2: f64, sigma_eta2: f64) -> Result<SystemModel> {
    let mut a = DMatrix::zeros(DIM, DIM);
    for blk in 0..BLOCKS {
        let o = blk * BLOCK_SIZE;
        // column j of the shift is e_{j+1}
        for j in 0..BLOCK_SIZE {
            a[(o + (j + 1) % BLOCK_SIZE, o + j)] = 0.9;
        }
    }
    SystemModel::new(a, DMatrix::identity(DIM, DIM), sigma_u2, sigma_w2, sigma_eta2)
}

/// Thermal network parameters. Resistances in degC/kW, capacity in kJ/degC,
/// time step in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct HvacConfig {
    pub delta: f64,
    pub theta: f64,
    pub xi_env: f64,
    pub xi_pair: f64,
    pub v: f64,
    pub sigma_u2: f64,
    pub sigma_w2: f64,
    pub sigma_eta2: f64,
    /// Undirected zone pairs (0-based).
    pub adjacency: Vec<(usize, usize)>,
}

impl Default for HvacConfig {
    fn default() -> Self {
        HvacConfig {
            delta: 35.0,
            theta: 0.0,
            xi_env: 1.0,
            xi_pair: 1.0,
            v: 100.0,
            sigma_u2: 10.0,
            sigma_w2: 1.0,
            sigma_eta2: 1.0,
            adjacency: grid_adjacency(),
        }
    }
}

/// Each block is a 2x2 grid laid out row-major (zones 1 2 / 3 4); zones
/// sharing an edge are connected.
pub fn grid_adjacency() -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for blk in 0..BLOCKS {
        let o = blk * BLOCK_SIZE;
        for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            edges.push((o + i, o + j));
        }
    }
    edges
}

impl HvacConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("xi_env", self.xi_env), ("xi_pair", self.xi_pair), ("v", self.v)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.theta != 0.0 {
            return Err(Error::InvalidArgument(
                "a nonzero environment temperature adds an affine drive the linear model cannot carry".into(),
            ));
        }
        for &(i, j) in &self.adjacency {
            if i >= DIM || j >= DIM {
                return Err(Error::CoordinateOutOfRange { coord: i.max(j), r: DIM });
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop on zone {i}")));
            }
            if block_of(i) != block_of(j) {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) crosses blocks")));
            }
        }
        Ok(())
    }
}

/// Accessible coordinates of the thermal model: all but the last zone of
/// each block (0-based).
pub fn model2_accessible() -> Vec<usize> {
    (0..DIM).filter(|i| i % BLOCK_SIZE != BLOCK_SIZE - 1).collect()
}

/// Discretized zone temperatures:
/// `x_i' = x_i + (D / (v xi_env)) (theta - x_i) + (D / v) u_i
///        + sum_j (D / (v xi_pair)) (x_j - x_i) + (sqrt(D) / v) w_i`.
///
/// The noise gain is folded into the process variance,
/// `sigma_w2_eff = sigma_w2 D / v^2`, so the returned model is in the plain
/// `x' = A x + B u + w` form. Returns the model and the accessible set.
pub fn build_model2(cfg: &HvacConfig) -> Result<(SystemModel, Vec<usize>)> {
    cfg.validate()?;
    let step = cfg.delta / cfg.v;
    let mut a = DMatrix::identity(DIM, DIM) * (1.0 - step / cfg.xi_env);
    let mut seen = Vec::new();
    for &(i, j) in &cfg.adjacency {
        let key = (i.min(j), i.max(j));
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let g = step / cfg.xi_pair;
        a[(i, j)] += g;
        a[(j, i)] += g;
        a[(i, i)] -= g;
        a[(j, j)] -= g;
    }
    let b = DMatrix::identity(DIM, DIM) * step;
    let sigma_w2 = cfg.sigma_w2 * cfg.delta / (cfg.v * cfg.v);
    let model = SystemModel::new(a, b, cfg.sigma_u2, sigma_w2, cfg.sigma_eta2)?;
    Ok((model, model2_accessible()))
}
