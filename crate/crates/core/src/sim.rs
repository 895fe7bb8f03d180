//! Plant simulator: the "true" vehicle the estimator is judged
//! against.
//!
//! The plant extends the bicycle model with wheel-spin dynamics (front
//! and rear wheel speed states driven by axle torques) and computes
//! per-tire forces from the reference terramechanics model instead of
//! the surrogate, closing the longitudinal force balance that the
//! estimation model treats as an exogenous input. The estimator
//! therefore faces the mismatch between its learned force model and
//! the reference physics that generated its training data.
//!
//! Integration runs at a fixed 1 ms step; states, noisy measurements,
//! and the estimator-facing inputs are logged at 50 Hz. A twin
//! simulator integrates the estimation model itself (surrogate forces,
//! six states) for experiments that need the filter's process model to
//! be exact.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bicycle::{self, BicycleInput, BicycleState, VehicleParams};
use crate::error::{Result, TerraError};
use crate::mlp::Mlp;
use crate::terramech::{self, TerrainParams, WheelState};
use crate::ukf::NZ;

/// Plant integration step [s].
pub const PLANT_DT: f64 = 1e-3;
/// Logging period [s] (50 Hz).
pub const LOG_DT: f64 = 0.02;
/// Wheel spin inertia [kg·m²].
pub const WHEEL_INERTIA: f64 = 15.0;
/// Lateral speed magnitude [m/s] treated as a diverged run.
pub const BLOWUP_SPEED: f64 = 20.0;
/// Minimum plant longitudinal speed [m/s]; below it the slip-angle
/// kinematics degenerate and the run is aborted.
pub const MIN_PLANT_SPEED: f64 = 0.5;

/// Open-loop drive profile: sinusoidal steering and rear drive
/// torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    /// Run length [s].
    pub duration: f64,
    /// Initial longitudinal speed [m/s].
    pub initial_speed: f64,
    /// Steering amplitude [rad].
    pub steer_amplitude: f64,
    /// Steering frequency [Hz].
    pub steer_frequency: f64,
    /// Mean rear per-wheel drive torque [N·m].
    pub torque_mean: f64,
    /// Torque modulation amplitude [N·m].
    pub torque_amplitude: f64,
    /// Torque modulation frequency [Hz].
    pub torque_frequency: f64,
}

impl Default for Scenario {
    /// A 40 s full-amplitude weaving drive. The soil's shear budget
    /// caps the sustainable drawbar pull: drive torque beyond roughly
    /// 60 N·m per wheel spins up the rear axle (the Wong–Reece (1−κ)
    /// factor then strips its lateral grip), and at full steering the
    /// plow drag pins the speed near 3–4 m/s. The defaults sit inside
    /// that envelope, with slow torque modulation for a non-constant
    /// speed profile.
    fn default() -> Self {
        Self {
            duration: 40.0,
            initial_speed: 4.0,
            steer_amplitude: 0.35,
            steer_frequency: 0.10,
            torque_mean: 55.0,
            torque_amplitude: 35.0,
            torque_frequency: 0.05,
        }
    }
}

impl Scenario {
    /// Steering angle δ(t) [rad].
    pub fn delta(&self, t: f64) -> f64 {
        self.steer_amplitude * (2.0 * std::f64::consts::PI * self.steer_frequency * t).sin()
    }

    /// Steering rate δ̇(t) [rad/s] (analytic derivative).
    pub fn delta_rate(&self, t: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * self.steer_frequency;
        self.steer_amplitude * w * (w * t).cos()
    }

    /// Rear per-wheel drive torque T(t) [N·m].
    pub fn rear_torque(&self, t: f64) -> f64 {
        self.torque_mean
            + self.torque_amplitude
                * (2.0 * std::f64::consts::PI * self.torque_frequency * t).sin()
    }

    /// Largest steering rate the profile can produce [rad/s].
    pub fn max_delta_rate(&self) -> f64 {
        self.steer_amplitude * 2.0 * std::f64::consts::PI * self.steer_frequency
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(TerraError::InvalidInput(format!(
                "scenario duration {} s must be positive",
                self.duration
            )));
        }
        if self.initial_speed < MIN_PLANT_SPEED {
            return Err(TerraError::InvalidInput(format!(
                "initial speed {} m/s below the {MIN_PLANT_SPEED} m/s floor",
                self.initial_speed
            )));
        }
        Ok(())
    }
}

/// Full plant state: bicycle body states plus wheel spins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Body states (front-axle kinematic reference point).
    pub body: BicycleState,
    /// Front wheel spin rate [rad/s].
    pub omega_wf: f64,
    /// Rear wheel spin rate [rad/s].
    pub omega_wr: f64,
}

/// One 50 Hz log record: true states, per-tire lateral forces, the
/// noisy measurement, and the estimator-facing inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Time [s].
    pub t: f64,
    /// True plant state.
    pub state: PlantState,
    /// Front per-tire lateral force, wheel frame [N].
    pub fy_front: f64,
    /// Rear per-tire lateral force [N].
    pub fy_rear: f64,
    /// Noisy observation of [x, y, ψ, u, v, ω_z].
    pub measurement: [f64; NZ],
    /// Inputs the estimator consumes over the next log interval.
    pub input: BicycleInput,
}

/// A complete logged run plus everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    /// Drive profile.
    pub scenario: Scenario,
    /// Vehicle parameters.
    pub vehicle: VehicleParams,
    /// Soil truth.
    pub terrain: TerrainParams,
    /// Measurement noise standard deviations.
    pub noise_std: [f64; NZ],
    /// Noise seed.
    pub seed: u64,
    /// 50 Hz records.
    pub records: Vec<LogRecord>,
}

/// Per-tire wheel-frame forces at one plant instant.
struct TireSnapshot {
    fx_front: f64,
    fy_front: f64,
    fx_rear: f64,
    fy_rear: f64,
    slip_front: f64,
    slip_rear: f64,
}

fn plant_tires(
    s: &PlantState,
    delta: f64,
    delta_rate: f64,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
    mesh: usize,
) -> Result<TireSnapshot> {
    let b = &s.body;
    let r = vehicle.wheel.radius;
    let slip = |omega_w: f64| {
        (r * omega_w - b.u) / (r * omega_w).abs().max(b.u.abs()).max(terramech::MIN_SPEED)
    };
    let slip_front = slip(s.omega_wf);
    let slip_rear = slip(s.omega_wr);
    let alpha_f = ((b.v + vehicle.l_f * b.omega_z) / b.u).atan() - delta;
    let alpha_r = ((b.v - vehicle.l_r * b.omega_z) / b.u).atan();

    let front = terramech::tire_forces(
        &WheelState {
            slip_ratio: slip_front,
            slip_angle: alpha_f,
            longitudinal_velocity: b.u,
            normal_load: vehicle.front_tire_load(),
            steering_rate: delta_rate,
        },
        terrain,
        &vehicle.wheel,
        mesh,
    )?;
    let rear = terramech::tire_forces(
        &WheelState {
            slip_ratio: slip_rear,
            slip_angle: alpha_r,
            longitudinal_velocity: b.u,
            normal_load: vehicle.rear_tire_load(),
            steering_rate: 0.0,
        },
        terrain,
        &vehicle.wheel,
        mesh,
    )?;
    Ok(TireSnapshot {
        fx_front: front.fx,
        fy_front: front.fy,
        fx_rear: rear.fx,
        fy_rear: rear.fy,
        slip_front,
        slip_rear,
    })
}

/// Plant state derivative (the true dynamics).
fn plant_derivatives(
    s: &PlantState,
    delta: f64,
    delta_rate: f64,
    front_torque: f64,
    rear_torque: f64,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
    mesh: usize,
) -> Result<(PlantState, TireSnapshot)> {
    let tires = plant_tires(s, delta, delta_rate, vehicle, terrain, mesh)?;
    let b = &s.body;
    // Two tires per axle; forces enter the body equations directly,
    // the same small-angle force application the estimation model
    // uses, so the plant–model gap is the tire force law itself.
    let fx_front_body = 2.0 * tires.fx_front;
    let fy_front_body = 2.0 * tires.fy_front;
    let fx_rear_body = 2.0 * tires.fx_rear;
    let fy_rear_body = 2.0 * tires.fy_rear;

    let lateral = b.v + vehicle.l_f * b.omega_z;
    let r = vehicle.wheel.radius;
    let derivative = PlantState {
        body: BicycleState {
            x: b.u * b.psi.cos() - lateral * b.psi.sin(),
            y: b.u * b.psi.sin() + lateral * b.psi.cos(),
            psi: b.omega_z,
            u: (fx_front_body + fx_rear_body) / vehicle.mass,
            v: (fy_front_body + fy_rear_body) / vehicle.mass - b.u * b.omega_z,
            omega_z: (vehicle.l_f * fy_front_body - vehicle.l_r * fy_rear_body)
                / vehicle.yaw_inertia,
        },
        omega_wf: (front_torque - r * tires.fx_front) / WHEEL_INERTIA,
        omega_wr: (rear_torque - r * tires.fx_rear) / WHEEL_INERTIA,
    };
    Ok((derivative, tires))
}

/// Wheel spin rate [rad/s] at which a tire rolls freely (zero net
/// longitudinal force) at body speed `u`, found by bisection on the
/// slip ratio.
pub fn free_rolling_spin(
    u: f64,
    load: f64,
    terrain: &TerrainParams,
    vehicle: &VehicleParams,
    mesh: usize,
) -> Result<f64> {
    let fx_at = |slip: f64| -> Result<f64> {
        let forces = terramech::tire_forces(
            &WheelState {
                slip_ratio: slip,
                slip_angle: 0.0,
                longitudinal_velocity: u,
                normal_load: load,
                steering_rate: 0.0,
            },
            terrain,
            &vehicle.wheel,
            mesh,
        )?;
        Ok(forces.fx)
    };
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    if fx_at(lo)? > 0.0 {
        return Err(TerraError::Convergence(
            "tire produces thrust at zero slip; no free-rolling point below".into(),
        ));
    }
    if fx_at(hi)? < 0.0 {
        return Err(TerraError::Convergence(
            "tire cannot overcome rolling resistance within the slip range".into(),
        ));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fx_at(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let slip = 0.5 * (lo + hi);
    // slip = (r·ω − u)/(r·ω) for driving slip, so r·ω = u/(1 − slip).
    Ok(u / (vehicle.wheel.radius * (1.0 - slip)))
}

/// Simulates the plant and returns the 50 Hz log. `noise_std` scales
/// the additive Gaussian measurement noise (all zeros gives exact
/// measurements); `seed` fixes the noise draw.
pub fn simulate(
    scenario: &Scenario,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
    noise_std: [f64; NZ],
    seed: u64,
    mesh: usize,
) -> Result<TrajectoryLog> {
    scenario.validate()?;
    if noise_std.iter().any(|s| *s < 0.0) {
        return Err(TerraError::InvalidInput(
            "noise standard deviations must be nonnegative".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let u0 = scenario.initial_speed;
    let mut state = PlantState {
        body: BicycleState {
            u: u0,
            ..BicycleState::default()
        },
        omega_wf: free_rolling_spin(u0, vehicle.front_tire_load(), terrain, vehicle, mesh)?,
        omega_wr: free_rolling_spin(u0, vehicle.rear_tire_load(), terrain, vehicle, mesh)?,
    };

    let steps_per_log = (LOG_DT / PLANT_DT).round() as usize;
    let total_logs = (scenario.duration / LOG_DT).round() as usize;
    let mut records = Vec::with_capacity(total_logs + 1);

    for log_idx in 0..=total_logs {
        let t = log_idx as f64 * LOG_DT;
        let (derivative, tires) = plant_derivatives(
            &state,
            scenario.delta(t),
            scenario.delta_rate(t),
            0.0,
            scenario.rear_torque(t),
            vehicle,
            terrain,
            mesh,
        )?;
        log::debug!(
            "t={t:.2} u={:.3} v={:.3} wz={:.3} slip=({:.3},{:.3}) fx=({:.0},{:.0}) fy=({:.0},{:.0})",
            state.body.u,
            state.body.v,
            state.body.omega_z,
            tires.slip_front,
            tires.slip_rear,
            tires.fx_front,
            tires.fx_rear,
            tires.fy_front,
            tires.fy_rear,
        );
        let mut measurement = [
            state.body.x,
            state.body.y,
            state.body.psi,
            state.body.u,
            state.body.v,
            state.body.omega_z,
        ];
        for (m, std) in measurement.iter_mut().zip(noise_std) {
            if std > 0.0 {
                *m += std * normal.sample(&mut rng);
            }
        }
        records.push(LogRecord {
            t,
            state,
            fy_front: tires.fy_front,
            fy_rear: tires.fy_rear,
            measurement,
            input: BicycleInput {
                delta: scenario.delta(t),
                delta_rate: scenario.delta_rate(t),
                accel: derivative.body.u,
                slip_front: tires.slip_front,
                slip_rear: tires.slip_rear,
            },
        });
        if log_idx == total_logs {
            break;
        }

        for sub in 0..steps_per_log {
            let t_sub = t + sub as f64 * PLANT_DT;
            let (d, _) = plant_derivatives(
                &state,
                scenario.delta(t_sub),
                scenario.delta_rate(t_sub),
                0.0,
                scenario.rear_torque(t_sub),
                vehicle,
                terrain,
                mesh,
            )?;
            state = PlantState {
                body: BicycleState {
                    x: state.body.x + PLANT_DT * d.body.x,
                    y: state.body.y + PLANT_DT * d.body.y,
                    psi: state.body.psi + PLANT_DT * d.body.psi,
                    u: state.body.u + PLANT_DT * d.body.u,
                    v: state.body.v + PLANT_DT * d.body.v,
                    omega_z: state.body.omega_z + PLANT_DT * d.body.omega_z,
                },
                omega_wf: state.omega_wf + PLANT_DT * d.omega_wf,
                omega_wr: state.omega_wr + PLANT_DT * d.omega_wr,
            };
            if state.body.v.abs() > BLOWUP_SPEED {
                return Err(TerraError::Convergence(format!(
                    "lateral speed {} m/s at t = {:.3} s: simulation diverged",
                    state.body.v,
                    t_sub + PLANT_DT
                )));
            }
            if state.body.u < MIN_PLANT_SPEED {
                return Err(TerraError::Convergence(format!(
                    "longitudinal speed fell to {} m/s at t = {:.3} s",
                    state.body.u,
                    t_sub + PLANT_DT
                )));
            }
        }
    }

    Ok(TrajectoryLog {
        scenario: *scenario,
        vehicle: *vehicle,
        terrain: *terrain,
        noise_std,
        seed,
        records,
    })
}

/// Twin-experiment inputs: open-loop profiles for every estimator
/// input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinScenario {
    /// Run length [s].
    pub duration: f64,
    /// Initial longitudinal speed [m/s].
    pub initial_speed: f64,
    /// Steering amplitude [rad] at `steer_frequency`.
    pub steer_amplitude: f64,
    /// Steering frequency [Hz].
    pub steer_frequency: f64,
    /// Longitudinal acceleration amplitude [m/s²].
    pub accel_amplitude: f64,
    /// Acceleration frequency [Hz].
    pub accel_frequency: f64,
    /// Slip-ratio excitation amplitude [-].
    pub slip_amplitude: f64,
}

impl Default for TwinScenario {
    fn default() -> Self {
        Self {
            duration: 40.0,
            initial_speed: 5.0,
            steer_amplitude: 0.35,
            steer_frequency: 0.25,
            accel_amplitude: 0.4,
            accel_frequency: 0.05,
            slip_amplitude: 0.08,
        }
    }
}

impl TwinScenario {
    /// Estimator input at time `t`.
    pub fn input(&self, t: f64) -> BicycleInput {
        let ws = 2.0 * std::f64::consts::PI * self.steer_frequency;
        let wa = 2.0 * std::f64::consts::PI * self.accel_frequency;
        BicycleInput {
            delta: self.steer_amplitude * (ws * t).sin(),
            delta_rate: self.steer_amplitude * ws * (ws * t).cos(),
            accel: self.accel_amplitude * (wa * t).sin(),
            slip_front: self.slip_amplitude * (0.7 * ws * t).sin(),
            slip_rear: self.slip_amplitude * (0.4 * ws * t + 1.0).sin(),
        }
    }
}

/// Integrates the estimation model itself (surrogate forces, six
/// states) at exactly the filter discretization and returns the
/// filter-rate inputs and exact measurements. With the same surrogate
/// and the true n, a filter run on this data has zero model error.
pub fn simulate_twin(
    scenario: &TwinScenario,
    vehicle: &VehicleParams,
    terrain: &TerrainParams,
    model: &Mlp,
    filter_dt: f64,
    substeps: usize,
) -> Result<(Vec<BicycleInput>, Vec<[f64; NZ]>, Vec<BicycleState>)> {
    if !(scenario.duration > 0.0) || substeps == 0 || !(filter_dt > 0.0) {
        return Err(TerraError::InvalidInput(
            "twin scenario needs positive duration, step, and substeps".into(),
        ));
    }
    let steps = (scenario.duration / filter_dt).round() as usize;
    let h = filter_dt / substeps as f64;
    let mut state = BicycleState {
        u: scenario.initial_speed,
        ..BicycleState::default()
    };
    let mut inputs = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    for k in 0..steps {
        let input = scenario.input(k as f64 * filter_dt);
        for _ in 0..substeps {
            state = bicycle::step_euler(&state, &input, h, vehicle, terrain, model)?;
        }
        inputs.push(input);
        measurements.push([state.x, state.y, state.psi, state.u, state.v, state.omega_z]);
        states.push(state);
    }
    Ok((inputs, measurements, states))
}

/// Filter-rate views of a plant log: the inputs applied over each
/// interval and the measurement at the end of it.
pub fn estimator_io(log: &TrajectoryLog) -> (Vec<BicycleInput>, Vec<[f64; NZ]>) {
    let n = log.records.len().saturating_sub(1);
    let inputs = log.records[..n].iter().map(|r| r.input).collect();
    let measurements = log.records[1..].iter().map(|r| r.measurement).collect();
    (inputs, measurements)
}

const CSV_COLUMNS: [&str; 22] = [
    "t",
    "x",
    "y",
    "psi",
    "u",
    "v",
    "omega_z",
    "omega_wf",
    "omega_wr",
    "fy_front",
    "fy_rear",
    "meas_x",
    "meas_y",
    "meas_psi",
    "meas_u",
    "meas_v",
    "meas_omega_z",
    "delta",
    "delta_rate",
    "accel",
    "slip_front",
    "slip_rear",
];

impl TrajectoryLog {
    /// Writes the records as CSV (shortest round-trip float
    /// formatting, so reading back is lossless).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_path(path).map_err(|e| TerraError::Serialization(e.to_string()))?;
        w.write_record(CSV_COLUMNS)
            .map_err(|e| TerraError::Serialization(e.to_string()))?;
        for r in &self.records {
            let b = &r.state.body;
            let row = [
                r.t,
                b.x,
                b.y,
                b.psi,
                b.u,
                b.v,
                b.omega_z,
                r.state.omega_wf,
                r.state.omega_wr,
                r.fy_front,
                r.fy_rear,
                r.measurement[0],
                r.measurement[1],
                r.measurement[2],
                r.measurement[3],
                r.measurement[4],
                r.measurement[5],
                r.input.delta,
                r.input.delta_rate,
                r.input.accel,
                r.input.slip_front,
                r.input.slip_rear,
            ];
            let text: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            w.write_record(&text)
                .map_err(|e| TerraError::Serialization(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads records back from [`TrajectoryLog::write_csv`] output;
    /// run metadata comes from the caller (the sidecar manifest).
    pub fn read_csv(path: &Path, meta: TrajectoryLog) -> Result<TrajectoryLog> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| TerraError::Serialization(e.to_string()))?;
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| TerraError::Serialization(e.to_string()))?;
            if row.len() != CSV_COLUMNS.len() {
                return Err(TerraError::Serialization(format!(
                    "expected {} columns, found {}",
                    CSV_COLUMNS.len(),
                    row.len()
                )));
            }
            let mut v = [0.0_f64; 22];
            for (slot, field) in v.iter_mut().zip(row.iter()) {
                *slot = field
                    .parse()
                    .map_err(|e| TerraError::Serialization(format!("bad float {field}: {e}")))?;
            }
            records.push(LogRecord {
                t: v[0],
                state: PlantState {
                    body: BicycleState {
                        x: v[1],
                        y: v[2],
                        psi: v[3],
                        u: v[4],
                        v: v[5],
                        omega_z: v[6],
                    },
                    omega_wf: v[7],
                    omega_wr: v[8],
                },
                fy_front: v[9],
                fy_rear: v[10],
                measurement: [v[11], v[12], v[13], v[14], v[15], v[16]],
                input: BicycleInput {
                    delta: v[17],
                    delta_rate: v[18],
                    accel: v[19],
                    slip_front: v[20],
                    slip_rear: v[21],
                },
            });
        }
        Ok(TrajectoryLog {
            records,
            ..meta
        })
    }

    /// SHA-256 of the CSV-formatted record stream.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.records {
            let b = &r.state.body;
            for v in [
                r.t,
                b.x,
                b.y,
                b.psi,
                b.u,
                b.v,
                b.omega_z,
                r.state.omega_wf,
                r.state.omega_wr,
                r.fy_front,
                r.fy_rear,
            ] {
                hasher.update(format!("{v},").as_bytes());
            }
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Writes the sidecar manifest (run metadata + record hash) as
    /// JSON.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let manifest = TraceMeta {
            scenario: self.scenario,
            vehicle: self.vehicle,
            terrain: self.terrain,
            noise_std: self.noise_std,
            seed: self.seed,
            records: self.records.len(),
            content_sha256: self.content_hash(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| TerraError::Serialization(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads a log from its CSV and manifest, verifying record count
    /// and content hash.
    pub fn read(csv_path: &Path, manifest_path: &Path) -> Result<TrajectoryLog> {
        let meta = TraceMeta::read(manifest_path)?;
        let shell = TrajectoryLog {
            scenario: meta.scenario,
            vehicle: meta.vehicle,
            terrain: meta.terrain,
            noise_std: meta.noise_std,
            seed: meta.seed,
            records: Vec::new(),
        };
        let log = Self::read_csv(csv_path, shell)?;
        if log.records.len() != meta.records || log.content_hash() != meta.content_sha256 {
            return Err(TerraError::Serialization(format!(
                "trace {} does not match its manifest",
                csv_path.display()
            )));
        }
        Ok(log)
    }
}

/// Run metadata stored in the trace manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    /// Drive profile.
    pub scenario: Scenario,
    /// Vehicle parameters.
    pub vehicle: VehicleParams,
    /// Soil truth.
    pub terrain: TerrainParams,
    /// Measurement noise standard deviations.
    pub noise_std: [f64; NZ],
    /// Noise seed.
    pub seed: u64,
    /// Number of records in the CSV.
    pub records: usize,
    /// SHA-256 of the record stream.
    pub content_sha256: String,
}

impl TraceMeta {
    /// Reads a manifest written by [`TrajectoryLog::write_manifest`].
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| TerraError::Serialization(format!("manifest {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhs::InputSpace;
    use crate::terramech::DEFAULT_MESH;

    fn short_scenario() -> Scenario {
        Scenario {
            duration: 2.0,
            ..Scenario::default()
        }
    }

    fn coarse_mesh() -> usize {
        32
    }

    #[test]
    fn default_scenario_stays_inside_the_training_envelope() {
        let s = Scenario::default();
        assert!(s.max_delta_rate() <= 0.56, "rate {}", s.max_delta_rate());
        assert!(s.steer_amplitude <= 0.6);
    }

    #[test]
    fn free_rolling_wheel_has_no_net_longitudinal_force() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let load = vehicle.rear_tire_load();
        let omega = free_rolling_spin(5.0, load, &terrain, &vehicle, DEFAULT_MESH).unwrap();
        let slip = (vehicle.wheel.radius * omega - 5.0)
            / (vehicle.wheel.radius * omega).abs().max(5.0);
        let forces = terramech::tire_forces(
            &WheelState {
                slip_ratio: slip,
                slip_angle: 0.0,
                longitudinal_velocity: 5.0,
                normal_load: load,
                steering_rate: 0.0,
            },
            &terrain,
            &vehicle.wheel,
            DEFAULT_MESH,
        )
        .unwrap();
        assert!(
            forces.fx.abs() < 1e-6 * load,
            "residual thrust {} N",
            forces.fx
        );
        assert!(omega > 5.0 / vehicle.wheel.radius, "free rolling needs drive slip");
    }

    /// Below the free-rolling spin the soil drags the wheels up and
    /// brakes the body: the drivetrain can only dissipate.
    #[test]
    fn sub_equilibrium_wheels_brake_the_body_and_spin_up() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let u = 5.0;
        let state = PlantState {
            body: BicycleState {
                u,
                ..BicycleState::default()
            },
            omega_wf: 0.9
                * free_rolling_spin(u, vehicle.front_tire_load(), &terrain, &vehicle, 64)
                    .unwrap(),
            omega_wr: 0.9
                * free_rolling_spin(u, vehicle.rear_tire_load(), &terrain, &vehicle, 64)
                    .unwrap(),
        };
        let (d, tires) =
            plant_derivatives(&state, 0.0, 0.0, 0.0, 0.0, &vehicle, &terrain, 64).unwrap();
        assert!(tires.fx_front < 0.0 && tires.fx_rear < 0.0, "dragging wheels must brake");
        assert!(d.body.u < 0.0, "body must decelerate, got u̇ = {}", d.body.u);
        assert!(
            d.omega_wf > 0.0 && d.omega_wr > 0.0,
            "soil drag must spin the wheels back up"
        );
    }

    /// An unpowered run injects no energy: the speed never rises
    /// beyond integration noise.
    #[test]
    fn coasting_vehicle_never_gains_speed() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let scenario = Scenario {
            duration: 1.0,
            steer_amplitude: 0.0,
            torque_mean: 0.0,
            torque_amplitude: 0.0,
            ..short_scenario()
        };
        let log =
            simulate(&scenario, &vehicle, &terrain, [0.0; NZ], 1, coarse_mesh()).unwrap();
        let u0 = log.records[0].state.body.u;
        for r in &log.records {
            assert!(
                r.state.body.u <= u0 + 1e-6,
                "coasting speed rose to {} at t = {}",
                r.state.body.u,
                r.t
            );
        }
    }

    /// Zero steering keeps the lateral channel identically zero.
    #[test]
    fn straight_line_run_has_no_lateral_motion() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let scenario = Scenario {
            steer_amplitude: 0.0,
            duration: 1.0,
            ..short_scenario()
        };
        let log =
            simulate(&scenario, &vehicle, &terrain, [0.0; NZ], 2, coarse_mesh()).unwrap();
        for r in &log.records {
            assert_eq!(r.state.body.v, 0.0);
            assert_eq!(r.state.body.omega_z, 0.0);
            assert_eq!(r.state.body.psi, 0.0);
            assert_eq!(r.state.body.y, 0.0);
            assert_eq!(r.fy_front, 0.0);
            assert_eq!(r.fy_rear, 0.0);
        }
        let last = log.records.last().unwrap();
        assert!(last.state.body.x > 0.0, "vehicle did not advance");
    }

    #[test]
    fn log_cadence_is_fifty_hertz() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let log = simulate(
            &short_scenario(),
            &vehicle,
            &terrain,
            [0.0; NZ],
            3,
            coarse_mesh(),
        )
        .unwrap();
        assert_eq!(log.records.len(), 101);
        for (k, r) in log.records.iter().enumerate() {
            assert!((r.t - k as f64 * LOG_DT).abs() < 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let noise = [0.5, 0.5, 0.01, 0.1, 0.1, 0.01];
        let a = simulate(&short_scenario(), &vehicle, &terrain, noise, 7, coarse_mesh()).unwrap();
        let b = simulate(&short_scenario(), &vehicle, &terrain, noise, 7, coarse_mesh()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&short_scenario(), &vehicle, &terrain, noise, 8, coarse_mesh()).unwrap();
        assert_ne!(a.records[0].measurement, c.records[0].measurement);
    }

    /// Halving the integration step barely moves the trajectory
    /// (first-order self-convergence of the plant integrator).
    #[test]
    fn plant_integration_is_self_convergent() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let scenario = Scenario {
            duration: 1.0,
            ..Scenario::default()
        };
        // The plant step is fixed; emulate a half-step run by running
        // the same profile at half speed... instead compare against a
        // finer integration built from the same derivative field.
        let log = simulate(&scenario, &vehicle, &terrain, [0.0; NZ], 4, coarse_mesh()).unwrap();
        let fine = simulate_fine(&scenario, &vehicle, &terrain, coarse_mesh(), PLANT_DT / 2.0);
        let last = log.records.last().unwrap().state.body;
        let d = ((last.x - fine.x).powi(2)
            + (last.y - fine.y).powi(2)
            + (last.u - fine.u).powi(2)
            + (last.v - fine.v).powi(2))
        .sqrt();
        assert!(d < 5e-3, "coarse vs fine end-state distance {d}");
    }

    /// Reference integration at an arbitrary step, for the
    /// self-convergence check.
    fn simulate_fine(
        scenario: &Scenario,
        vehicle: &VehicleParams,
        terrain: &TerrainParams,
        mesh: usize,
        dt: f64,
    ) -> BicycleState {
        let u0 = scenario.initial_speed;
        let mut state = PlantState {
            body: BicycleState {
                u: u0,
                ..BicycleState::default()
            },
            omega_wf: free_rolling_spin(u0, vehicle.front_tire_load(), terrain, vehicle, mesh)
                .unwrap(),
            omega_wr: free_rolling_spin(u0, vehicle.rear_tire_load(), terrain, vehicle, mesh)
                .unwrap(),
        };
        let steps = (scenario.duration / dt).round() as usize;
        for k in 0..steps {
            let t = k as f64 * dt;
            let (d, _) = plant_derivatives(
                &state,
                scenario.delta(t),
                scenario.delta_rate(t),
                0.0,
                scenario.rear_torque(t),
                vehicle,
                terrain,
                mesh,
            )
            .unwrap();
            state = PlantState {
                body: BicycleState {
                    x: state.body.x + dt * d.body.x,
                    y: state.body.y + dt * d.body.y,
                    psi: state.body.psi + dt * d.body.psi,
                    u: state.body.u + dt * d.body.u,
                    v: state.body.v + dt * d.body.v,
                    omega_z: state.body.omega_z + dt * d.body.omega_z,
                },
                omega_wf: state.omega_wf + dt * d.omega_wf,
                omega_wr: state.omega_wr + dt * d.omega_wr,
            };
        }
        state.body
    }

    /// Measurement noise must hit the requested standard deviation.
    #[test]
    fn measurement_noise_matches_the_requested_spread() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let noise = [1.2, 1.2, 0.0175, 0.25, 0.25, 0.0175];
        // Unpowered straight line: trivial dynamics, 2001 samples.
        let scenario = Scenario {
            duration: 40.0,
            steer_amplitude: 0.0,
            torque_mean: 0.0,
            torque_amplitude: 0.0,
            ..Scenario::default()
        };
        let log = simulate(&scenario, &vehicle, &terrain, noise, 11, coarse_mesh()).unwrap();
        for ch in 0..NZ {
            let truth = |r: &LogRecord| {
                let b = &r.state.body;
                [b.x, b.y, b.psi, b.u, b.v, b.omega_z][ch]
            };
            let residuals: Vec<f64> = log
                .records
                .iter()
                .map(|r| r.measurement[ch] - truth(r))
                .collect();
            let n = residuals.len() as f64;
            let mean = residuals.iter().sum::<f64>() / n;
            let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let std = var.sqrt();
            assert!(
                (std - noise[ch]).abs() < 0.15 * noise[ch],
                "channel {ch}: sample std {std} vs nominal {}",
                noise[ch]
            );
        }
    }

    #[test]
    fn csv_round_trip_preserves_every_record() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let noise = [0.5, 0.5, 0.01, 0.1, 0.1, 0.01];
        let log = simulate(&short_scenario(), &vehicle, &terrain, noise, 5, coarse_mesh()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        log.write_csv(&path).unwrap();
        let meta = TrajectoryLog {
            records: Vec::new(),
            ..log.clone()
        };
        let back = TrajectoryLog::read_csv(&path, meta).unwrap();
        assert_eq!(log, back);

        let manifest = dir.path().join("run.json");
        log.write_manifest(&manifest).unwrap();
        let via_manifest = TrajectoryLog::read(&path, &manifest).unwrap();
        assert_eq!(log, via_manifest);
    }

    /// The twin integrates the estimation model exactly: re-stepping
    /// the logged inputs through the bicycle model reproduces the
    /// measurements bit for bit.
    #[test]
    fn twin_log_is_exactly_reproducible_by_the_estimation_model() {
        let mut model = Mlp::new(&[10, 8, 8, 1], 21).unwrap();
        model.set_normalization(&InputSpace::default().bounds, [-4000.0, 4000.0]);
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let scenario = TwinScenario {
            duration: 2.0,
            ..TwinScenario::default()
        };
        let (inputs, measurements, states) =
            simulate_twin(&scenario, &vehicle, &terrain, &model, 0.02, 2).unwrap();
        assert_eq!(inputs.len(), 100);
        let mut state = BicycleState {
            u: scenario.initial_speed,
            ..BicycleState::default()
        };
        for k in 0..inputs.len() {
            for _ in 0..2 {
                state =
                    bicycle::step_euler(&state, &inputs[k], 0.01, &vehicle, &terrain, &model)
                        .unwrap();
            }
            assert_eq!(
                measurements[k],
                [state.x, state.y, state.psi, state.u, state.v, state.omega_z]
            );
            assert_eq!(states[k], state);
        }
    }

    #[test]
    fn degenerate_scenarios_are_rejected() {
        let vehicle = VehicleParams::default();
        let terrain = TerrainParams::clay();
        let bad_duration = Scenario {
            duration: 0.0,
            ..Scenario::default()
        };
        assert!(simulate(&bad_duration, &vehicle, &terrain, [0.0; NZ], 0, 64).is_err());
        let bad_speed = Scenario {
            initial_speed: 0.1,
            ..Scenario::default()
        };
        assert!(simulate(&bad_speed, &vehicle, &terrain, [0.0; NZ], 0, 64).is_err());
        let bad_noise = [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(simulate(&Scenario::default(), &vehicle, &terrain, bad_noise, 0, 64).is_err());
    }
}
