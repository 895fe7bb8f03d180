//! Planar single-track (bicycle) vehicle model whose axle lateral
//! forces come from the trained tire surrogate.
//!
//! States: inertial position (x, y) [m], yaw ψ [rad], body-frame
//! longitudinal and lateral velocity (u, v) [m/s], and yaw rate
//! ω_z [rad/s]. The position kinematics track the front-axle reference
//! point, so the lateral velocity entering them is v + L_f·ω_z.
//! Longitudinal acceleration and the axle slip ratios are exogenous
//! inputs (wheel encoders and an accelerometer provide them on the
//! vehicle); the surrogate closes the loop for the lateral axle
//! forces, with the front axle seeing the steering rate and the rear
//! axle none.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TerraError};
use crate::mlp::Mlp;
use crate::terramech::{self, TerrainParams, WheelGeometry};

/// Standard gravity [m/s²].
pub const GRAVITY: f64 = 9.81;
/// Minimum |u| [m/s] for well-defined slip angles.
pub const MIN_LONGITUDINAL_SPEED: f64 = 0.5;
/// Largest admissible integration step [s].
pub const MAX_STEP: f64 = 0.05;

/// Rigid-body and geometric vehicle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Total mass [kg].
    pub mass: f64,
    /// Yaw inertia [kg·m²].
    pub yaw_inertia: f64,
    /// Center of mass to front axle [m].
    pub l_f: f64,
    /// Center of mass to rear axle [m].
    pub l_r: f64,
    /// Wheel geometry shared by all four wheels.
    pub wheel: WheelGeometry,
}

impl Default for VehicleParams {
    /// A mid-size off-road platform. The mass keeps the per-tire
    /// static loads well inside the surrogate's training envelope.
    fn default() -> Self {
        Self {
            mass: 1800.0,
            yaw_inertia: 2600.0,
            l_f: 1.8,
            l_r: 1.2,
            wheel: WheelGeometry::default(),
        }
    }
}

impl VehicleParams {
    /// Static per-tire normal load [N] on the front axle (half the
    /// axle load).
    pub fn front_tire_load(&self) -> f64 {
        self.mass * GRAVITY * self.l_r / (2.0 * (self.l_f + self.l_r))
    }

    /// Static per-tire normal load [N] on the rear axle.
    pub fn rear_tire_load(&self) -> f64 {
        self.mass * GRAVITY * self.l_f / (2.0 * (self.l_f + self.l_r))
    }
}

/// Bicycle-model state; also used as the state derivative container.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BicycleState {
    /// Inertial x position [m] (or ẋ).
    pub x: f64,
    /// Inertial y position [m] (or ẏ).
    pub y: f64,
    /// Yaw angle [rad] (or ψ̇).
    pub psi: f64,
    /// Body longitudinal velocity [m/s] (or u̇).
    pub u: f64,
    /// Body lateral velocity [m/s] (or v̇).
    pub v: f64,
    /// Yaw rate [rad/s] (or ω̇_z).
    pub omega_z: f64,
}

/// Exogenous inputs at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BicycleInput {
    /// Front steering angle δ [rad].
    pub delta: f64,
    /// Front steering rate δ̇ [rad/s].
    pub delta_rate: f64,
    /// Commanded longitudinal acceleration u̇ [m/s²].
    pub accel: f64,
    /// Front-axle longitudinal slip ratio [-].
    pub slip_front: f64,
    /// Rear-axle longitudinal slip ratio [-].
    pub slip_rear: f64,
}

/// Front and rear slip angles [rad]:
/// α_f = atan((v + L_f·ω_z)/u) − δ, α_r = atan((v − L_r·ω_z)/u).
pub fn slip_angles(state: &BicycleState, input: &BicycleInput, params: &VehicleParams) -> (f64, f64) {
    let alpha_f = ((state.v + params.l_f * state.omega_z) / state.u).atan() - input.delta;
    let alpha_r = ((state.v - params.l_r * state.omega_z) / state.u).atan();
    (alpha_f, alpha_r)
}

/// Front and rear axle lateral forces [N] from the surrogate
/// (2 × per-tire force at half the static axle load).
pub fn axle_lateral_forces(
    state: &BicycleState,
    input: &BicycleInput,
    params: &VehicleParams,
    terrain: &TerrainParams,
    model: &Mlp,
) -> Result<(f64, f64)> {
    check_speed(state)?;
    let (alpha_f, alpha_r) = slip_angles(state, input, params);
    let k_star = terramech::aggregate_modulus(terrain, &params.wheel);
    let tire = |slip: f64, alpha: f64, load: f64, steer_rate: f64| -> Result<f64> {
        model.forward(&[
            slip,
            alpha,
            state.u,
            load,
            steer_rate,
            k_star,
            terrain.n,
            terrain.k,
            terrain.c,
            terrain.phi,
        ])
    };
    let f_yf = 2.0 * tire(
        input.slip_front,
        alpha_f,
        params.front_tire_load(),
        input.delta_rate,
    )?;
    let f_yr = 2.0 * tire(input.slip_rear, alpha_r, params.rear_tire_load(), 0.0)?;
    Ok((f_yf, f_yr))
}

/// Time derivative of the bicycle state:
///
/// ẋ = u·cosψ − (v + L_f·ω_z)·sinψ
/// ẏ = u·sinψ + (v + L_f·ω_z)·cosψ
/// ψ̇ = ω_z
/// u̇ = a_x
/// v̇ = (F_yf + F_yr)/M − u·ω_z
/// ω̇_z = (L_f·F_yf − L_r·F_yr)/I_zz
pub fn derivatives(
    state: &BicycleState,
    input: &BicycleInput,
    params: &VehicleParams,
    terrain: &TerrainParams,
    model: &Mlp,
) -> Result<BicycleState> {
    let (f_yf, f_yr) = axle_lateral_forces(state, input, params, terrain, model)?;
    let lateral = state.v + params.l_f * state.omega_z;
    Ok(BicycleState {
        x: state.u * state.psi.cos() - lateral * state.psi.sin(),
        y: state.u * state.psi.sin() + lateral * state.psi.cos(),
        psi: state.omega_z,
        u: input.accel,
        v: (f_yf + f_yr) / params.mass - state.u * state.omega_z,
        omega_z: (params.l_f * f_yf - params.l_r * f_yr) / params.yaw_inertia,
    })
}

/// One explicit-Euler step of length `dt` [s].
pub fn step_euler(
    state: &BicycleState,
    input: &BicycleInput,
    dt: f64,
    params: &VehicleParams,
    terrain: &TerrainParams,
    model: &Mlp,
) -> Result<BicycleState> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(TerraError::InvalidInput(format!(
            "step size {dt} s outside (0, {MAX_STEP}]"
        )));
    }
    let d = derivatives(state, input, params, terrain, model)?;
    Ok(BicycleState {
        x: state.x + dt * d.x,
        y: state.y + dt * d.y,
        psi: state.psi + dt * d.psi,
        u: state.u + dt * d.u,
        v: state.v + dt * d.v,
        omega_z: state.omega_z + dt * d.omega_z,
    })
}

fn check_speed(state: &BicycleState) -> Result<()> {
    if state.u.abs() < MIN_LONGITUDINAL_SPEED {
        return Err(TerraError::InvalidInput(format!(
            "longitudinal speed {} m/s below the {MIN_LONGITUDINAL_SPEED} m/s model floor",
            state.u
        )));
    }
    Ok(())
}
