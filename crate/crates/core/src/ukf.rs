//! Unscented Kalman filter that estimates the vehicle state jointly
//! with the terrain sinkage exponent n.
//!
//! The augmented state is [x, y, ψ, u, v, ω_z, n]; the first six
//! entries follow the surrogate-driven bicycle model and n is a
//! random-walk parameter whose only dynamics come from process noise.
//! Sigma points use the scaled unscented transform (α, β, κ); the
//! measurement is a direct, noisy observation of the six vehicle
//! states. The sinkage exponent of the posterior mean is clamped to
//! its physical range after every update; the covariance is left
//! untouched so the filter keeps reporting its true spread.

use nalgebra::{Cholesky, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::bicycle::{self, BicycleInput, BicycleState, VehicleParams};
use crate::error::{Result, TerraError};
use crate::mlp::Mlp;
use crate::terramech::TerrainParams;

/// Augmented state dimension.
pub const NX: usize = 7;
/// Measurement dimension.
pub const NZ: usize = 6;
/// Number of sigma points.
pub const N_SIGMA: usize = 2 * NX + 1;
/// Physical range of the sinkage exponent.
pub const N_RANGE: [f64; 2] = [0.3, 1.3];
/// Default measurement noise standard deviations for
/// [x, y, ψ, u, v, ω_z]: GPS-grade position, IMU-grade angles and
/// rates [m, m, rad, m/s, m/s, rad/s].
pub const DEFAULT_MEAS_STD: [f64; NZ] = [1.2, 1.2, 0.0175, 0.25, 0.25, 0.0175];

/// Augmented state vector [x, y, ψ, u, v, ω_z, n].
pub type StateVec = SVector<f64, NX>;
/// Augmented state covariance.
pub type StateMat = SMatrix<f64, NX, NX>;
type MeasVec = SVector<f64, NZ>;
type MeasMat = SMatrix<f64, NZ, NZ>;
type CrossMat = SMatrix<f64, NX, NZ>;

/// Filter tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfConfig {
    /// Sigma-point spread parameter.
    pub alpha: f64,
    /// Prior-distribution parameter (2 is optimal for Gaussians).
    pub beta: f64,
    /// Secondary scaling parameter.
    pub kappa: f64,
    /// Filter step [s].
    pub dt: f64,
    /// Euler substeps per filter step.
    pub substeps: usize,
    /// Process noise variance added per filter step, diagonal.
    pub process_noise: [f64; NX],
    /// Measurement noise variances, diagonal of R.
    pub measurement_noise: [f64; NZ],
    /// Initial state variance, diagonal of P₀.
    pub initial_variance: [f64; NX],
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
            dt: 0.02,
            substeps: 2,
            // The v entry absorbs the plant–model gap (force rotation,
            // input aliasing) that would otherwise bias n̂; the last
            // entry is the sinkage-exponent random walk, small enough
            // that the posterior tightens instead of wandering.
            process_noise: [1e-6, 1e-6, 1e-7, 1e-5, 5e-5, 1e-7, 2e-8],
            measurement_noise: {
                let mut r = [0.0; NZ];
                for (r, s) in r.iter_mut().zip(DEFAULT_MEAS_STD) {
                    *r = s * s;
                }
                r
            },
            initial_variance: [1.0, 1.0, 0.01, 0.25, 0.25, 0.01, 0.05],
        }
    }
}

impl UkfConfig {
    /// λ = α²·(L + κ) − L.
    pub fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (NX as f64 + self.kappa) - NX as f64
    }

    /// Mean and covariance weights of the scaled unscented transform.
    pub fn weights(&self) -> ([f64; N_SIGMA], [f64; N_SIGMA]) {
        let lambda = self.lambda();
        let denom = NX as f64 + lambda;
        let mut w_mean = [1.0 / (2.0 * denom); N_SIGMA];
        let mut w_cov = w_mean;
        w_mean[0] = lambda / denom;
        w_cov[0] = w_mean[0] + 1.0 - self.alpha * self.alpha + self.beta;
        (w_mean, w_cov)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(TerraError::InvalidInput(format!(
                "sigma spread alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(self.dt > 0.0) || self.substeps == 0 {
            return Err(TerraError::InvalidInput(
                "filter step and substep count must be positive".into(),
            ));
        }
        if self.dt / self.substeps as f64 > bicycle::MAX_STEP {
            return Err(TerraError::InvalidInput(format!(
                "inner step {} s exceeds the {} s integration limit",
                self.dt / self.substeps as f64,
                bicycle::MAX_STEP
            )));
        }
        if self.process_noise.iter().any(|&q| q < 0.0)
            || self.measurement_noise.iter().any(|&r| r <= 0.0)
            || self.initial_variance.iter().any(|&p| p <= 0.0)
        {
            return Err(TerraError::InvalidInput(
                "noise variances must be positive (process noise nonnegative)".into(),
            ));
        }
        Ok(())
    }
}

/// The filter: posterior mean and covariance plus tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct Ukf {
    /// Tuning parameters.
    pub config: UkfConfig,
    /// Posterior mean [x, y, ψ, u, v, ω_z, n].
    pub mean: StateVec,
    /// Posterior covariance.
    pub covariance: StateMat,
}

/// One logged estimator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    /// Time [s].
    pub t: f64,
    /// Posterior mean of the augmented state.
    pub mean: [f64; NX],
    /// Posterior standard deviation of the sinkage exponent.
    pub n_std: f64,
}

impl Ukf {
    /// Builds the filter around an initial vehicle state and sinkage
    /// exponent guess; P₀ comes from the config diagonal.
    pub fn new(config: UkfConfig, vehicle: &BicycleState, n0: f64) -> Result<Self> {
        config.validate()?;
        let mut mean = StateVec::zeros();
        mean[0] = vehicle.x;
        mean[1] = vehicle.y;
        mean[2] = vehicle.psi;
        mean[3] = vehicle.u;
        mean[4] = vehicle.v;
        mean[5] = vehicle.omega_z;
        mean[6] = n0.clamp(N_RANGE[0], N_RANGE[1]);
        let covariance = StateMat::from_diagonal(&SVector::from(config.initial_variance));
        Ok(Self {
            config,
            mean,
            covariance,
        })
    }

    /// Current vehicle-state part of the mean.
    pub fn vehicle_state(&self) -> BicycleState {
        BicycleState {
            x: self.mean[0],
            y: self.mean[1],
            psi: self.mean[2],
            u: self.mean[3],
            v: self.mean[4],
            omega_z: self.mean[5],
        }
    }

    /// Current sinkage-exponent estimate.
    pub fn n_estimate(&self) -> f64 {
        self.mean[6]
    }

    /// Posterior standard deviation of the sinkage exponent.
    pub fn n_std(&self) -> f64 {
        self.covariance[(6, 6)].max(0.0).sqrt()
    }

    /// Sigma points of the current posterior:
    /// χ₀ = m, χ_i = m ± [√((L+λ)·P)]_i.
    pub fn sigma_points(&self) -> Result<[StateVec; N_SIGMA]> {
        let scaled = self.covariance * (NX as f64 + self.config.lambda());
        let root = robust_cholesky(&scaled)?;
        let mut points = [self.mean; N_SIGMA];
        for i in 0..NX {
            let col = root.column(i);
            points[1 + i] += col;
            points[1 + NX + i] -= col;
        }
        Ok(points)
    }

    /// Time update: every sigma point flows through the bicycle model
    /// for one filter step (n stays constant along the flow), then the
    /// set is collapsed back to mean and covariance and the process
    /// noise is added.
    pub fn predict(
        &mut self,
        input: &BicycleInput,
        params: &VehicleParams,
        terrain: &TerrainParams,
        model: &Mlp,
    ) -> Result<()> {
        let points = self.sigma_points()?;
        let mut propagated = [StateVec::zeros(); N_SIGMA];
        let h = self.config.dt / self.config.substeps as f64;
        for (i, point) in points.iter().enumerate() {
            let mut state = BicycleState {
                x: point[0],
                y: point[1],
                psi: point[2],
                u: point[3],
                v: point[4],
                omega_z: point[5],
            };
            let soil = terrain.with_n(point[6]);
            for _ in 0..self.config.substeps {
                state = bicycle::step_euler(&state, input, h, params, &soil, model)?;
            }
            propagated[i] =
                SVector::from([state.x, state.y, state.psi, state.u, state.v, state.omega_z, point[6]]);
        }

        let (w_mean, w_cov) = self.config.weights();
        let mut mean = StateVec::zeros();
        for (w, p) in w_mean.iter().zip(&propagated) {
            mean += *w * p;
        }
        let mut cov = StateMat::zeros();
        for (w, p) in w_cov.iter().zip(&propagated) {
            let d = p - mean;
            cov += *w * d * d.transpose();
        }
        for (i, q) in self.config.process_noise.iter().enumerate() {
            cov[(i, i)] += q;
        }
        self.mean = mean;
        self.covariance = symmetrize(&cov);
        self.clamp_exponent();
        Ok(())
    }

    /// Measurement update with a direct observation
    /// z = [x, y, ψ, u, v, ω_z] + noise.
    pub fn update(&mut self, measurement: &[f64; NZ]) -> Result<()> {
        let points = self.sigma_points()?;
        let (w_mean, w_cov) = self.config.weights();

        // h(x): the first six components.
        let predicted: Vec<MeasVec> = points
            .iter()
            .map(|p| MeasVec::from_fn(|i, _| p[i]))
            .collect();
        let mut z_mean = MeasVec::zeros();
        for (w, z) in w_mean.iter().zip(&predicted) {
            z_mean += *w * z;
        }
        let mut s = MeasMat::zeros();
        let mut cross = CrossMat::zeros();
        for ((w, z), x) in w_cov.iter().zip(&predicted).zip(&points) {
            let dz = z - z_mean;
            let dx = x - self.mean;
            s += *w * dz * dz.transpose();
            cross += *w * dx * dz.transpose();
        }
        for (i, r) in self.config.measurement_noise.iter().enumerate() {
            s[(i, i)] += r;
        }

        let s_inv = s
            .try_inverse()
            .ok_or_else(|| TerraError::Linalg("innovation covariance is singular".into()))?;
        let gain = cross * s_inv;
        let innovation = MeasVec::from(*measurement) - z_mean;
        self.mean += gain * innovation;
        self.covariance = symmetrize(&(self.covariance - gain * s * gain.transpose()));
        self.clamp_exponent();
        Ok(())
    }

    /// One full filter cycle: predict with `input`, then update with
    /// `measurement`.
    pub fn step(
        &mut self,
        input: &BicycleInput,
        measurement: &[f64; NZ],
        params: &VehicleParams,
        terrain: &TerrainParams,
        model: &Mlp,
    ) -> Result<()> {
        self.predict(input, params, terrain, model)?;
        self.update(measurement)
    }

    fn clamp_exponent(&mut self) {
        self.mean[6] = self.mean[6].clamp(N_RANGE[0], N_RANGE[1]);
    }
}

/// Runs the filter along a logged drive: at every filter step the
/// input is applied for one prediction and the corresponding
/// measurement is assimilated. Inputs and measurements are sampled at
/// the filter rate; `t0` stamps the first record.
pub fn run_estimator(
    ukf: &mut Ukf,
    t0: f64,
    inputs: &[BicycleInput],
    measurements: &[[f64; NZ]],
    params: &VehicleParams,
    terrain: &TerrainParams,
    model: &Mlp,
) -> Result<Vec<EstimateRecord>> {
    if inputs.len() != measurements.len() {
        return Err(TerraError::InvalidInput(format!(
            "{} inputs vs {} measurements",
            inputs.len(),
            measurements.len()
        )));
    }
    let mut records = Vec::with_capacity(inputs.len());
    for (step, (input, z)) in inputs.iter().zip(measurements).enumerate() {
        ukf.step(input, z, params, terrain, model)?;
        records.push(EstimateRecord {
            t: t0 + (step + 1) as f64 * ukf.config.dt,
            mean: ukf.mean.into(),
            n_std: ukf.n_std(),
        });
    }
    Ok(records)
}

/// Cholesky factor with escalating diagonal jitter; terrains near the
/// bearing-capacity edge can make the propagated covariance lose
/// definiteness to rounding.
fn robust_cholesky(m: &StateMat) -> Result<StateMat> {
    if let Some(chol) = Cholesky::new(*m) {
        return Ok(chol.l());
    }
    let mut jitter = 1e-12;
    while jitter <= 1e-6 {
        let jittered = m + StateMat::identity() * jitter;
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol.l());
        }
        jitter *= 10.0;
    }
    Err(TerraError::Linalg(
        "covariance not positive definite even with 1e-6 jitter".into(),
    ))
}

fn symmetrize(m: &StateMat) -> StateMat {
    (m + m.transpose()) * 0.5
}
