//! Discrete-time linear systems `x_{t+1} = A x_t + B u_t + w_t` observed
//! through one-hot measurement matrices, `y_t = C (x_t + eta_t)`.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;
use crate::measurement::{MeasurementMatrix, Schedule};
use crate::{Error, Result};

/// Dynamics `(A, B)` together with the isotropic Gaussian variances of the
/// input, process noise and measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma_u2: f64,
    sigma_w2: f64,
    sigma_eta2: f64,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_u2: f64, sigma_w2: f64, sigma_eta2: f64) -> Result<Self> {
        let r = a.nrows();
        if r == 0 || a.ncols() != r {
            return Err(Error::DimensionMismatch(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        if b.nrows() != r || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!("B must be {r} x m with m >= 1, got {:?}", b.shape())));
        }
        for (name, v) in [("sigma_u2", sigma_u2), ("sigma_w2", sigma_w2), ("sigma_eta2", sigma_eta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite nonnegative variance, got {v}")));
            }
        }
        Ok(SystemModel { a, b, sigma_u2, sigma_w2, sigma_eta2 })
    }

    /// A noiseless model with unit input variance.
    pub fn noiseless(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        Self::new(a, b, 1.0, 0.0, 0.0)
    }

    pub fn with_variances(mut self, sigma_u2: f64, sigma_w2: f64, sigma_eta2: f64) -> Result<Self> {
        self = Self::new(self.a, self.b, sigma_u2, sigma_w2, sigma_eta2)?;
        Ok(self)
    }

    /// State dimension.
    pub fn r(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn sigma_u2(&self) -> f64 {
        self.sigma_u2
    }
    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }
    pub fn sigma_eta2(&self) -> f64 {
        self.sigma_eta2
    }

    /// Largest eigenvalue modulus of `A`. Falls back to the Gelfand estimate
    /// `||A^(2^k)||^(2^-k)` if the Schur iteration does not converge.
    pub fn spectral_radius(&self) -> f64 {
        match nalgebra::Schur::try_new(self.a.clone(), f64::EPSILON, 10_000) {
            Some(schur) => schur
                .complex_eigenvalues()
                .iter()
                .map(|z| libm::hypot(z.re, z.im))
                .fold(0.0, f64::max),
            None => {
                let (mut p, mut log_scale) = (self.a.clone(), 0.0);
                for k in 0..40 {
                    let n = crate::linalg::spectral_norm(&p);
                    if n == 0.0 {
                        return 0.0;
                    }
                    // track log ||A^(2^k)|| while keeping p normalized
                    log_scale += libm::log(n) / libm::pow(2.0, k as f64);
                    p /= n;
                    p = &p * &p;
                }
                libm::exp(log_scale)
            }
        }
    }
}

/// Constants with `||A^t|| <= psi_a * rho_a^(t-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityParams {
    pub psi_a: f64,
    pub rho_a: f64,
}

impl StabilityParams {
    pub fn new(psi_a: f64, rho_a: f64) -> Result<Self> {
        if !(psi_a >= 1.0 && psi_a.is_finite()) {
            return Err(Error::InvalidArgument(format!("psi_a must be >= 1, got {psi_a}")));
        }
        if !(rho_a > 0.0 && rho_a < 1.0) {
            return Err(Error::InvalidArgument(format!("rho_a must lie in (0, 1), got {rho_a}")));
        }
        Ok(StabilityParams { psi_a, rho_a })
    }
}

/// One simulated trajectory as seen by the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    pub measurement: MeasurementMatrix,
    /// `m x (T+1)`, column `t` is `u_t`.
    pub inputs: DMatrix<f64>,
    /// `n_bar x (T+2)`, column `t` is `y_t`.
    pub observations: DMatrix<f64>,
    pub horizon: usize,
    pub seed: u64,
    /// Position of the trajectory inside its schedule; keys the RNG streams.
    pub index: u64,
}

impl TrajectoryData {
    pub fn new(
        measurement: MeasurementMatrix,
        inputs: DMatrix<f64>,
        observations: DMatrix<f64>,
        seed: u64,
        index: u64,
    ) -> Result<Self> {
        let cols = inputs.ncols();
        if cols < 2 {
            return Err(Error::InvalidArgument("a trajectory needs T >= 1".into()));
        }
        let horizon = cols - 1;
        if observations.ncols() != horizon + 2 {
            return Err(Error::DimensionMismatch(format!(
                "{} input steps need {} observation steps, got {}",
                cols,
                horizon + 2,
                observations.ncols()
            )));
        }
        if observations.nrows() != measurement.len() {
            return Err(Error::DimensionMismatch(format!(
                "observations have {} rows, measurement has {} sensors",
                observations.nrows(),
                measurement.len()
            )));
        }
        Ok(TrajectoryData { measurement, inputs, observations, horizon, seed, index })
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Input = 0,
    Process = 1,
    Measurement = 2,
}

fn stream_rng(seed: u64, index: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(3).wrapping_add(stream as u64));
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, std_dev: f64, n: usize) -> DVector<f64> {
    if std_dev == 0.0 {
        return DVector::zeros(n);
    }
    DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std_dev
    })
}

/// Simulates trajectory 0 of the given seed. See [`simulate_trajectory_at`].
pub fn simulate_trajectory(model: &SystemModel, meas: &MeasurementMatrix, horizon: usize, seed: u64) -> Result<TrajectoryData> {
    simulate_trajectory_at(model, meas, horizon, seed, 0)
}

/// Simulates `x_0 = 0` for `t = 0..=T`, collecting `u_0..u_T` and
/// `y_0..y_{T+1}`.
///
/// Input, process-noise and measurement-noise draws come from three ChaCha8
/// streams keyed by `(seed, index, stream)`, so a trajectory depends only on
/// its own key and never on which other trajectories were simulated.
pub fn simulate_trajectory_at(
    model: &SystemModel,
    meas: &MeasurementMatrix,
    horizon: usize,
    seed: u64,
    index: u64,
) -> Result<TrajectoryData> {
    let (r, m) = (model.r(), model.m());
    if meas.r() != r {
        return Err(Error::DimensionMismatch(format!(
            "measurement is over {} coordinates, model has {r}",
            meas.r()
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon T must be at least 1".into()));
    }
    let mut u_rng = stream_rng(seed, index, Stream::Input);
    let mut w_rng = stream_rng(seed, index, Stream::Process);
    let mut eta_rng = stream_rng(seed, index, Stream::Measurement);
    let (su, sw, se) = (libm::sqrt(model.sigma_u2), libm::sqrt(model.sigma_w2), libm::sqrt(model.sigma_eta2));

    let mut inputs = DMatrix::zeros(m, horizon + 1);
    let mut observations = DMatrix::zeros(meas.len(), horizon + 2);
    let mut x = DVector::zeros(r);
    let mut observe = |x: &DVector<f64>, t: usize, eta_rng: &mut ChaCha8Rng| {
        let noisy = x + gaussian(eta_rng, se, r);
        for (row, &c) in meas.coords().iter().enumerate() {
            observations[(row, t)] = noisy[c];
        }
    };
    for t in 0..=horizon {
        observe(&x, t, &mut eta_rng);
        let u = gaussian(&mut u_rng, su, m);
        let w = gaussian(&mut w_rng, sw, r);
        x = &model.a * &x + &model.b * &u + w;
        inputs.set_column(t, &u);
    }
    observe(&x, horizon + 1, &mut eta_rng);
    TrajectoryData::new(meas.clone(), inputs, observations, seed, index)
}

/// Simulates one trajectory per schedule entry; trajectory `k` uses RNG
/// index `k`.
pub fn simulate_schedule(model: &SystemModel, schedule: &Schedule, horizon: usize, seed: u64) -> Result<Vec<TrajectoryData>> {
    schedule
        .matrices()
        .iter()
        .enumerate()
        .map(|(k, c)| simulate_trajectory_at(model, c, horizon, seed, k as u64))
        .collect()
}

/// `[B, AB, ..., A^d B]` by repeated multiplication.
pub fn markov_parameters(model: &SystemModel, d: usize) -> Vec<DMatrix<f64>> {
    let mut blocks = Vec::with_capacity(d + 1);
    blocks.push(model.b.clone());
    for i in 0..d {
        let next = &model.a * &blocks[i];
        blocks.push(next);
    }
    blocks
}

/// `[B, AB, ..., A^{r-1} B]`, an `r x rm` matrix.
pub fn controllability_matrix(model: &SystemModel) -> DMatrix<f64> {
    linalg::hstack(&markov_parameters(model, model.r() - 1))
}

/// Default relative rank tolerance `r * eps`.
pub fn default_rank_tol(r: usize) -> f64 {
    r as f64 * f64::EPSILON
}

/// Full row rank of the controllability matrix, counting singular values
/// above `rel_tol * sigma_max` (default `r * eps`).
pub fn is_controllable(model: &SystemModel, rel_tol: Option<f64>) -> bool {
    let tol = rel_tol.unwrap_or_else(|| default_rank_tol(model.r()));
    linalg::numerical_rank(&controllability_matrix(model), tol) == model.r()
}

/// Checks `||A^t|| <= psi_a rho_a^(t-1)` in spectral norm for `t = 1..=horizon`.
pub fn verify_stability(model: &SystemModel, params: StabilityParams, horizon: usize) -> bool {
    const SLACK: f64 = 1e-12;
    let mut power = model.a.clone();
    let mut bound = params.psi_a;
    for t in 1..=horizon {
        if t > 1 {
            power = &power * &model.a;
            bound *= params.rho_a;
        }
        if linalg::spectral_norm(&power) > bound * (1.0 + SLACK) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_variances() {
        let a = DMatrix::identity(2, 2);
        assert!(SystemModel::new(a.clone(), DMatrix::zeros(3, 1), 1.0, 0.0, 0.0).is_err());
        assert!(SystemModel::new(a.clone(), DMatrix::zeros(2, 0), 1.0, 0.0, 0.0).is_err());
        assert!(SystemModel::new(a, DMatrix::zeros(2, 1), -1.0, 0.0, 0.0).is_err());
        assert!(StabilityParams::new(0.5, 0.5).is_err());
        assert!(StabilityParams::new(1.0, 1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = SystemModel::noiseless(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let meas = MeasurementMatrix::full(3);
        assert!(matches!(simulate_trajectory(&model, &meas, 5, 0), Err(Error::DimensionMismatch(_))));
        assert!(simulate_trajectory(&model, &MeasurementMatrix::full(2), 0, 0).is_err());
    }

    #[test]
    fn streams_do_not_depend_on_siblings() {
        let model = SystemModel::new(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2), 1.0, 1.0, 1.0).unwrap();
        let meas = MeasurementMatrix::full(2);
        let a = simulate_trajectory_at(&model, &meas, 20, 9, 3).unwrap();
        let b = simulate_trajectory_at(&model, &meas, 20, 9, 3).unwrap();
        let c = simulate_trajectory_at(&model, &meas, 20, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.inputs, c.inputs);
    }
}
