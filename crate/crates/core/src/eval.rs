//! Evaluation metrics: receding-horizon prediction error of the
//! estimation model against a logged plant run, and per-tire force
//! RMSE of the surrogate along a trace.
//!
//! Horizon evaluation slides a window over the log: each window is
//! initialized from the *true* state at its start record, integrated
//! open loop with the logged inputs at the filter discretization
//! (one log interval per step, with inner Euler substeps), and scored
//! by the squared endpoint error only. Scores are averaged per state
//! over all windows. Because u̇ is an exogenous logged input, the u
//! channel of the prediction is independent of the force model — a
//! useful invariant for comparing models.

use serde::{Deserialize, Serialize};

use crate::bicycle::{self, VehicleParams};
use crate::error::{Result, TerraError};
use crate::lhs;
use crate::mlp::Mlp;
use crate::sim::{TrajectoryLog, LOG_DT};
use crate::terramech::{TerrainParams, WheelState};

/// Horizon-evaluation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonConfig {
    /// Prediction horizon [s].
    pub horizon: f64,
    /// Window start spacing [s].
    pub stride: f64,
    /// Euler substeps per log interval (matches the filter).
    pub substeps: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            horizon: 2.5,
            stride: 0.1,
            substeps: 2,
        }
    }
}

/// Mean squared endpoint error per state over all windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonMse {
    /// Windows evaluated.
    pub windows: usize,
    /// Position x [m²].
    pub x: f64,
    /// Position y [m²].
    pub y: f64,
    /// Yaw [rad²].
    pub psi: f64,
    /// Longitudinal speed [m²/s²].
    pub u: f64,
    /// Lateral speed [m²/s²].
    pub v: f64,
    /// Yaw rate [rad²/s²].
    pub omega_z: f64,
}

/// Receding-horizon endpoint MSE of the estimation model (surrogate
/// `model` on `terrain`) against the true states in `log`.
pub fn horizon_mse(
    log: &TrajectoryLog,
    model: &Mlp,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
    cfg: &HorizonConfig,
) -> Result<HorizonMse> {
    if cfg.substeps == 0 || !(cfg.horizon > 0.0) || !(cfg.stride > 0.0) {
        return Err(TerraError::InvalidInput(
            "horizon, stride, and substeps must be positive".into(),
        ));
    }
    let steps = (cfg.horizon / LOG_DT).round() as usize;
    let stride = (cfg.stride / LOG_DT).round().max(1.0) as usize;
    let n = log.records.len();
    if n <= steps {
        return Err(TerraError::InvalidInput(format!(
            "log with {n} records is shorter than the {steps}-step horizon"
        )));
    }
    let h = LOG_DT / cfg.substeps as f64;

    let mut sums = [0.0_f64; 6];
    let mut windows = 0usize;
    let mut start = 0usize;
    while start + steps < n {
        let mut state = log.records[start].state.body;
        for j in 0..steps {
            let input = log.records[start + j].input;
            for _ in 0..cfg.substeps {
                state = bicycle::step_euler(&state, &input, h, vehicle, terrain, model)?;
            }
        }
        let truth = log.records[start + steps].state.body;
        let errors = [
            state.x - truth.x,
            state.y - truth.y,
            state.psi - truth.psi,
            state.u - truth.u,
            state.v - truth.v,
            state.omega_z - truth.omega_z,
        ];
        for (s, e) in sums.iter_mut().zip(errors) {
            *s += e * e;
        }
        windows += 1;
        start += stride;
    }

    let m = windows as f64;
    Ok(HorizonMse {
        windows,
        x: sums[0] / m,
        y: sums[1] / m,
        psi: sums[2] / m,
        u: sums[3] / m,
        v: sums[4] / m,
        omega_z: sums[5] / m,
    })
}

/// Per-tire lateral-force RMSE of the surrogate along a logged trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceRmse {
    /// Front per-tire RMSE [N].
    pub front: f64,
    /// Rear per-tire RMSE [N].
    pub rear: f64,
    /// Pooled RMSE over both tires [N].
    pub combined: f64,
}

/// Surrogate per-tire lateral force (front, rear) at one log record,
/// from the true body state and the logged wheel-level inputs.
pub fn surrogate_axle_forces(
    record: &crate::sim::LogRecord,
    model: &Mlp,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
) -> Result<(f64, f64)> {
    let b = &record.state.body;
    let alpha_f = ((b.v + vehicle.l_f * b.omega_z) / b.u).atan() - record.input.delta;
    let alpha_r = ((b.v - vehicle.l_r * b.omega_z) / b.u).atan();
    let features = |slip: f64, alpha: f64, load: f64, steer_rate: f64| {
        lhs::features(
            &WheelState {
                slip_ratio: slip,
                slip_angle: alpha,
                longitudinal_velocity: b.u,
                normal_load: load,
                steering_rate: steer_rate,
            },
            terrain,
            &vehicle.wheel,
        )
    };
    let front = model.forward(&features(
        record.input.slip_front,
        alpha_f,
        vehicle.front_tire_load(),
        record.input.delta_rate,
    ))?;
    let rear = model.forward(&features(
        record.input.slip_rear,
        alpha_r,
        vehicle.rear_tire_load(),
        0.0,
    ))?;
    Ok((front, rear))
}

/// Compares the surrogate's per-tire lateral force against the
/// plant's logged wheel-frame forces at every record.
pub fn force_rmse(
    log: &TrajectoryLog,
    model: &Mlp,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
) -> Result<ForceRmse> {
    if log.records.is_empty() {
        return Err(TerraError::InvalidInput("empty trajectory log".into()));
    }
    let mut sum_front = 0.0;
    let mut sum_rear = 0.0;
    for r in &log.records {
        let (pred_front, pred_rear) = surrogate_axle_forces(r, model, vehicle, terrain)?;
        sum_front += (pred_front - r.fy_front).powi(2);
        sum_rear += (pred_rear - r.fy_rear).powi(2);
    }
    let n = log.records.len() as f64;
    Ok(ForceRmse {
        front: (sum_front / n).sqrt(),
        rear: (sum_rear / n).sqrt(),
        combined: ((sum_front + sum_rear) / (2.0 * n)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bicycle::{BicycleInput, BicycleState};
    use crate::lhs::InputSpace;
    use crate::sim::{self, LogRecord, PlantState, Scenario, TwinScenario};
    use crate::ukf::NZ;

    fn test_model(seed: u64) -> Mlp {
        let mut m = Mlp::new(&[10, 8, 8, 1], seed).unwrap();
        m.set_normalization(&InputSpace::default().bounds, [-4000.0, 4000.0]);
        m
    }

    /// Wraps a twin run in the log format so horizon evaluation can
    /// consume it.
    fn twin_log(model: &Mlp, vehicle: &VehicleParams, terrain: &TerrainParams) -> TrajectoryLog {
        let scenario = TwinScenario {
            duration: 8.0,
            ..TwinScenario::default()
        };
        let (_, _, states) =
            sim::simulate_twin(&scenario, vehicle, terrain, model, LOG_DT, 2).unwrap();
        let mut records = Vec::with_capacity(states.len() + 1);
        let first_input = scenario.input(0.0);
        let initial = BicycleState {
            u: scenario.initial_speed,
            ..BicycleState::default()
        };
        let to_record = |t: f64, body: BicycleState, input: BicycleInput| LogRecord {
            t,
            state: PlantState {
                body,
                omega_wf: 0.0,
                omega_wr: 0.0,
            },
            fy_front: 0.0,
            fy_rear: 0.0,
            measurement: [body.x, body.y, body.psi, body.u, body.v, body.omega_z],
            input,
        };
        records.push(to_record(0.0, initial, first_input));
        for (k, s) in states.iter().enumerate() {
            // The input stored on a record is the one applied over the
            // *next* interval.
            let input = scenario.input((k + 1) as f64 * LOG_DT);
            records.push(to_record((k + 1) as f64 * LOG_DT, *s, input));
        }
        TrajectoryLog {
            scenario: Scenario::default(),
            vehicle: *vehicle,
            terrain: *terrain,
            noise_std: [0.0; NZ],
            seed: 0,
            records,
        }
    }

    /// Evaluating the model on a log produced by the same model must
    /// give exactly zero error: the horizon stepping is the same map
    /// that generated the data.
    #[test]
    fn self_prediction_error_is_exactly_zero() {
        let model = test_model(1);
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let log = twin_log(&model, &vehicle, &terrain);
        let mse = horizon_mse(&log, &model, &vehicle, &terrain, &HorizonConfig::default())
            .unwrap();
        assert!(mse.windows > 10, "only {} windows", mse.windows);
        for (name, value) in [
            ("x", mse.x),
            ("y", mse.y),
            ("psi", mse.psi),
            ("u", mse.u),
            ("v", mse.v),
            ("omega_z", mse.omega_z),
        ] {
            assert_eq!(value, 0.0, "state {name} has nonzero self-prediction MSE");
        }
    }

    /// u̇ is exogenous, so the u-channel MSE cannot depend on the
    /// force model or the assumed terrain.
    #[test]
    fn u_channel_is_invariant_to_the_force_model() {
        let model = test_model(2);
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let log = twin_log(&model, &vehicle, &terrain);

        let other_model = test_model(99);
        let other_terrain = terrain.with_n(1.1);
        let a = horizon_mse(&log, &model, &vehicle, &terrain, &HorizonConfig::default())
            .unwrap();
        let b = horizon_mse(
            &log,
            &other_model,
            &vehicle,
            &other_terrain,
            &HorizonConfig::default(),
        )
        .unwrap();
        assert_eq!(a.u.to_bits(), b.u.to_bits(), "u MSE changed with the model");
        assert_ne!(a.v.to_bits(), b.v.to_bits(), "v MSE should differ across models");
    }

    #[test]
    fn window_count_and_short_log_handling() {
        let model = test_model(3);
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let log = twin_log(&model, &vehicle, &terrain); // 8 s, 401 records
        let cfg = HorizonConfig::default(); // 125 steps, stride 5
        let mse = horizon_mse(&log, &model, &vehicle, &terrain, &cfg).unwrap();
        // Window starts: 0, 5, ..., last with start + 125 <= 400.
        assert_eq!(mse.windows, 56);

        let mut short = log.clone();
        short.records.truncate(100);
        assert!(horizon_mse(&short, &model, &vehicle, &terrain, &cfg).is_err());
    }

    /// force_rmse must assemble exactly the feature vector the
    /// surrogate was trained on; planting the model's own outputs as
    /// the "plant" forces makes the expected RMSE exactly zero.
    #[test]
    fn force_rmse_detects_feature_wiring() {
        let model = test_model(4);
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let mut log = twin_log(&model, &vehicle, &terrain);
        let k_star = crate::terramech::aggregate_modulus(&terrain, &vehicle.wheel);
        for r in &mut log.records {
            let b = r.state.body;
            // Independent transcription of the feature layout.
            let alpha_f = ((b.v + vehicle.l_f * b.omega_z) / b.u).atan() - r.input.delta;
            let alpha_r = ((b.v - vehicle.l_r * b.omega_z) / b.u).atan();
            r.fy_front = model
                .forward(&[
                    r.input.slip_front,
                    alpha_f,
                    b.u,
                    vehicle.front_tire_load(),
                    r.input.delta_rate,
                    k_star,
                    terrain.n,
                    terrain.k,
                    terrain.c,
                    terrain.phi,
                ])
                .unwrap();
            r.fy_rear = model
                .forward(&[
                    r.input.slip_rear,
                    alpha_r,
                    b.u,
                    vehicle.rear_tire_load(),
                    0.0,
                    k_star,
                    terrain.n,
                    terrain.k,
                    terrain.c,
                    terrain.phi,
                ])
                .unwrap();
        }
        let rmse = force_rmse(&log, &model, &vehicle, &terrain).unwrap();
        assert_eq!(rmse.front, 0.0);
        assert_eq!(rmse.rear, 0.0);
        assert_eq!(rmse.combined, 0.0);

        // A different terrain must produce a nonzero mismatch.
        let rmse_off = force_rmse(&log, &model, &vehicle, &terrain.with_n(1.2)).unwrap();
        assert!(rmse_off.combined > 0.0);
    }
}
