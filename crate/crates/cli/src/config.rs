//! Run configuration: one TOML file drives every pipeline stage.
//!
//! Every section and field is optional; omitted values fall back to
//! the full-scale defaults (dry clay soil, the default vehicle, a
//! 40 s weaving drive). Smoke-scale runs override the sizes only.

use std::path::Path;

use serde::{Deserialize, Serialize};
use terra_core::bicycle::VehicleParams;
use terra_core::eval::HorizonConfig;
use terra_core::lhs::InputSpace;
use terra_core::sim::Scenario;
use terra_core::terramech::{TerrainParams, DEFAULT_MESH};
use terra_core::train::TrainConfig;
use terra_core::ukf::{UkfConfig, DEFAULT_MEAS_STD, NZ};
use terra_core::{Result, TerraError};

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Number of sampled rows.
    pub count: usize,
    /// Sampling seed.
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 10_000,
            seed: 1,
        }
    }
}

/// Measurement noise settings for the plant simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Standard deviations for [x, y, ψ, u, v, ω_z].
    pub std: [f64; NZ],
    /// Noise seed.
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            std: DEFAULT_MEAS_STD,
            seed: 7,
        }
    }
}

/// Estimator settings beyond the filter tuning itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Filter tuning.
    pub ukf: UkfConfig,
    /// Initial sinkage-exponent guess.
    pub n0: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            ukf: UkfConfig::default(),
            n0: 0.7,
        }
    }
}

/// Complete pipeline configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset generation.
    pub dataset: DatasetConfig,
    /// Surrogate training.
    pub train: TrainConfig,
    /// True soil parameters (plant and dataset nominal).
    pub terrain: TerrainSection,
    /// Vehicle parameters.
    pub vehicle: VehicleParams,
    /// Plant drive profile.
    pub scenario: Scenario,
    /// Measurement noise.
    pub noise: NoiseConfig,
    /// Estimator settings.
    pub estimator: EstimatorConfig,
    /// Horizon evaluation settings.
    pub eval: HorizonConfig,
    /// Contact integration mesh for the plant.
    pub mesh: MeshConfig,
}

/// Terrain section with its own default (dry clay).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainSection {
    /// Cohesive modulus k_c [N/m^(n+1)].
    pub k_c: f64,
    /// Frictional modulus k_phi [N/m^(n+2)].
    pub k_phi: f64,
    /// Sinkage exponent n [-].
    pub n: f64,
    /// Shear deformation modulus k [m].
    pub k: f64,
    /// Cohesion c [Pa].
    pub c: f64,
    /// Internal friction angle phi [rad].
    pub phi: f64,
}

impl Default for TerrainSection {
    fn default() -> Self {
        let t = TerrainParams::clay();
        Self {
            k_c: t.k_c,
            k_phi: t.k_phi,
            n: t.n,
            k: t.k,
            c: t.c,
            phi: t.phi,
        }
    }
}

impl TerrainSection {
    /// The core terrain struct.
    pub fn params(&self) -> TerrainParams {
        TerrainParams {
            k_c: self.k_c,
            k_phi: self.k_phi,
            n: self.n,
            k: self.k,
            c: self.c,
            phi: self.phi,
        }
    }
}

/// Contact-mesh resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshConfig {
    /// Nodes along the contact arc.
    pub nodes: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_MESH,
        }
    }
}

impl RunConfig {
    /// Loads a TOML config; a missing path argument yields defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| {
                    TerraError::Serialization(format!("config {}: {e}", p.display()))
                })?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field sanity checks, run before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.count < 20 {
            return Err(TerraError::InvalidInput(format!(
                "dataset.count = {} is below the minimum of 20",
                self.dataset.count
            )));
        }
        InputSpace::default().validate()?;
        let terrain = self.terrain.params();
        if !(terrain.n > 0.0) || terrain.k <= 0.0 || terrain.c < 0.0 {
            return Err(TerraError::InvalidInput(
                "terrain parameters out of physical range".into(),
            ));
        }
        if self.vehicle.mass <= 0.0 || self.vehicle.yaw_inertia <= 0.0 {
            return Err(TerraError::InvalidInput(
                "vehicle mass and inertia must be positive".into(),
            ));
        }
        let space = InputSpace::default();
        for (name, load) in [
            ("front", self.vehicle.front_tire_load()),
            ("rear", self.vehicle.rear_tire_load()),
        ] {
            let [lo, hi] = space.bounds[3];
            if !(lo..=hi).contains(&load) {
                return Err(TerraError::InvalidInput(format!(
                    "{name} per-tire load {load:.0} N outside the surrogate range \
                     [{lo:.0}, {hi:.0}] N"
                )));
            }
        }
        if self.scenario.max_delta_rate() > space.bounds[4][1] {
            return Err(TerraError::InvalidInput(format!(
                "scenario steering rate {:.3} rad/s exceeds the surrogate range {:.3} rad/s",
                self.scenario.max_delta_rate(),
                space.bounds[4][1]
            )));
        }
        if !(self.estimator.n0 >= 0.3 && self.estimator.n0 <= 1.3) {
            return Err(TerraError::InvalidInput(format!(
                "initial sinkage exponent {} outside [0.3, 1.3]",
                self.estimator.n0
            )));
        }
        if self.mesh.nodes < 16 {
            return Err(TerraError::InvalidInput(format!(
                "mesh.nodes = {} below the 16-node minimum",
                self.mesh.nodes
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_configs_inherit_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [dataset]
            count = 200

            [scenario]
            duration = 4.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.dataset.count, 200);
        assert_eq!(cfg.scenario.duration, 4.0);
        assert_eq!(cfg.train.ensemble, TrainConfig::default().ensemble);
        assert_eq!(cfg.terrain, TerrainSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("typo_section = 3");
        assert!(err.is_err());
    }

    #[test]
    fn invalid_configs_are_rejected_before_compute() {
        let mut heavy = RunConfig::default();
        heavy.vehicle.mass = 9000.0;
        assert!(heavy.validate().is_err());

        let mut fast_steer = RunConfig::default();
        fast_steer.scenario.steer_frequency = 2.0;
        assert!(fast_steer.validate().is_err());

        let mut bad_n0 = RunConfig::default();
        bad_n0.estimator.n0 = 2.0;
        assert!(bad_n0.validate().is_err());
    }
}
