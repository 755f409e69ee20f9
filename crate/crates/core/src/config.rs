//! Run configuration: one JSON document covering every stage, with
//! per-module defaults. Unknown keys are rejected so typos fail loudly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose4, TurbineParams};
use crate::matcher::IcpConfig;
use crate::model::SamplingSpec;
use crate::preprocess::VoxelSpec;
use crate::sim::{SceneSpec, SensorSpec, Sphere};
use crate::trajectory::TrajectoryParams;
use crate::trigger::TriggerConfig;

/// Rotor kinematics and scene extras; the turbine itself lives in the
/// top-level `turbine` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub blade_count: u32,
    pub blade_chord_m: f64,
    pub rotor_speed_rad_s: f64,
    pub initial_blade_phase_rad: f64,
    pub clutter: Vec<Sphere>,
    pub ground_z: Option<f64>,
}

impl Default for SceneSection {
    fn default() -> Self {
        let d = SceneSpec::default();
        Self {
            blade_count: d.blade_count,
            blade_chord_m: d.blade_chord_m,
            rotor_speed_rad_s: d.rotor_speed_rad_s,
            initial_blade_phase_rad: d.initial_blade_phase_rad,
            clutter: vec![Sphere {
                center: crate::geometry::Point3::new(15.0, -20.0, 1.5),
                radius_m: 1.5,
            }],
            ground_z: d.ground_z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClimbSection {
    pub start_pose: Pose4,
    pub climb_rate_m_s: f64,
    pub duration_s: f64,
}

impl Default for ClimbSection {
    fn default() -> Self {
        Self {
            start_pose: Pose4::new(85.0, 0.0, 4.0, std::f64::consts::PI),
            climb_rate_m_s: 1.0,
            duration_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundSection {
    pub threshold_m: f64,
    pub max_tilt_deg: f64,
    pub iterations: u32,
}

impl Default for GroundSection {
    fn default() -> Self {
        Self {
            threshold_m: 0.3,
            max_tilt_deg: 15.0,
            iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub linkage_radius_m: f64,
    pub min_cluster_size: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            linkage_radius_m: 2.0,
            min_cluster_size: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchingSection {
    /// Frames folded in per pass of the matching chain.
    pub batch_frames: usize,
    /// Satisfactory-match score threshold, m^2.
    pub score_threshold: f64,
}

impl Default for MatchingSection {
    fn default() -> Self {
        Self {
            batch_frames: 10,
            score_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerSection {
    pub gate_range_m: f64,
    pub debounce_s: f64,
    pub rangefinder_rate_hz: f64,
    pub range_noise_sigma_m: f64,
    pub dwell_s_per_hold: f64,
}

impl Default for TriggerSection {
    fn default() -> Self {
        // Offset passes look at the blade line along a 45-degree slant, so
        // the gate sits past the slant range, not the plain standoff.
        Self {
            gate_range_m: 18.0,
            debounce_s: 0.3,
            rangefinder_rate_hz: 100.0,
            range_noise_sigma_m: 0.05,
            dwell_s_per_hold: 12.0,
        }
    }
}

impl TriggerSection {
    pub fn to_config(self) -> TriggerConfig {
        TriggerConfig {
            gate_range_m: self.gate_range_m,
            debounce_s: self.debounce_s,
            rangefinder_rate_hz: self.rangefinder_rate_hz,
            range_noise_sigma_m: self.range_noise_sigma_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub turbine: TurbineParams,
    pub model_sampling: SamplingSpec,
    pub scene: SceneSection,
    pub sensor: SensorSpec,
    pub climb: ClimbSection,
    pub voxel: VoxelSpec,
    pub ground: GroundSection,
    pub clustering: ClusterSection,
    pub icp: IcpConfig,
    pub matching: MatchingSection,
    pub trajectory: TrajectoryParams,
    pub trigger: TriggerSection,
}

impl RunConfig {
    /// Assemble the simulator scene from the turbine and scene sections.
    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            turbine: Some(self.turbine),
            blade_count: self.scene.blade_count,
            blade_chord_m: self.scene.blade_chord_m,
            rotor_speed_rad_s: self.scene.rotor_speed_rad_s,
            initial_blade_phase_rad: self.scene.initial_blade_phase_rad,
            clutter: self.scene.clutter.clone(),
            ground_z: self.scene.ground_z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.turbine
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("turbine: {e}")))?;
        self.model_sampling.validate()?;
        self.scene_spec().validate()?;
        self.sensor.validate()?;
        if !(self.climb.duration_s.is_finite() && self.climb.duration_s > 0.0) {
            return Err(Error::InvalidConfig("climb.duration_s must be > 0".into()));
        }
        if !self.climb.climb_rate_m_s.is_finite() {
            return Err(Error::InvalidConfig(
                "climb.climb_rate_m_s must be finite".into(),
            ));
        }
        if !self.climb.start_pose.is_finite() {
            return Err(Error::InvalidConfig("climb.start_pose must be finite".into()));
        }
        self.voxel.validate()?;
        if !(self.ground.threshold_m.is_finite() && self.ground.threshold_m > 0.0) {
            return Err(Error::InvalidConfig("ground.threshold_m must be > 0".into()));
        }
        if !(self.ground.max_tilt_deg.is_finite()
            && self.ground.max_tilt_deg > 0.0
            && self.ground.max_tilt_deg < 90.0)
        {
            return Err(Error::InvalidConfig(
                "ground.max_tilt_deg must be in (0, 90)".into(),
            ));
        }
        if self.ground.iterations == 0 {
            return Err(Error::InvalidConfig("ground.iterations must be >= 1".into()));
        }
        if !(self.clustering.linkage_radius_m.is_finite() && self.clustering.linkage_radius_m > 0.0)
        {
            return Err(Error::InvalidConfig(
                "clustering.linkage_radius_m must be > 0".into(),
            ));
        }
        if self.clustering.min_cluster_size == 0 {
            return Err(Error::InvalidConfig(
                "clustering.min_cluster_size must be >= 1".into(),
            ));
        }
        self.icp.validate()?;
        if self.matching.batch_frames == 0 {
            return Err(Error::InvalidConfig(
                "matching.batch_frames must be >= 1".into(),
            ));
        }
        if !(self.matching.score_threshold.is_finite() && self.matching.score_threshold > 0.0) {
            return Err(Error::InvalidConfig(
                "matching.score_threshold must be > 0".into(),
            ));
        }
        self.trajectory.validate(&self.turbine)?;
        self.trigger.to_config().validate()?;
        if !(self.trigger.dwell_s_per_hold.is_finite() && self.trigger.dwell_s_per_hold > 0.0) {
            return Err(Error::InvalidConfig(
                "trigger.dwell_s_per_hold must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Parse and validate a config file. Unknown keys and bad values are
/// reported with their field path.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    config.validate()?;
    Ok(config)
}
