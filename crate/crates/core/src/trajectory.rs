//! Five-phase inspection trajectory around a matched turbine.
//!
//! At hub height: approach the rotor center head-on at the standoff, sweep
//! sideways to the blade tip, turn 180 degrees around the tip, and sweep
//! back to the center behind the rotor. The pattern repeats at a height
//! offset above and below, with the gimbal tilted so the camera looks back
//! at the blade line. Offset passes run in alternating direction and
//! consecutive passes are joined by short vertical transits, so the path
//! never crosses the rotor disc.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_to_disc_distance, wrap_angle, Point3, Pose4, TurbineParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryParams {
    /// Safe distance kept from the swept rotor disc.
    pub standoff_m: f64,
    /// Extra lateral clearance past the blade tip.
    pub tip_margin_m: f64,
    /// Vertical offset of the upper and lower passes.
    pub height_offset_m: f64,
    /// Gimbal tilt on the offset passes, degrees (down-positive above the
    /// blade line, up below).
    pub gimbal_tilt_deg: f64,
    pub lateral_step_m: f64,
    pub arc_step_deg: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            standoff_m: 10.0,
            tip_margin_m: 2.0,
            height_offset_m: 10.0,
            gimbal_tilt_deg: 45.0,
            lateral_step_m: 2.0,
            arc_step_deg: 10.0,
        }
    }
}

impl TrajectoryParams {
    pub fn validate(&self, turbine: &TurbineParams) -> Result<()> {
        if !(self.standoff_m.is_finite() && self.standoff_m > turbine.rotor_width_m / 2.0) {
            return Err(Error::UnsafeStandoff(format!(
                "standoff_m = {} must exceed rotor_width_m / 2 = {}",
                self.standoff_m,
                turbine.rotor_width_m / 2.0
            )));
        }
        if !(self.lateral_step_m.is_finite() && self.lateral_step_m > 0.0) {
            return Err(Error::InvalidConfig(
                "trajectory.lateral_step_m must be > 0".into(),
            ));
        }
        if !(self.arc_step_deg.is_finite() && self.arc_step_deg > 0.0) {
            return Err(Error::InvalidConfig(
                "trajectory.arc_step_deg must be > 0".into(),
            ));
        }
        if !(self.tip_margin_m.is_finite() && self.tip_margin_m >= 0.0) {
            return Err(Error::InvalidConfig(
                "trajectory.tip_margin_m must be >= 0".into(),
            ));
        }
        if !(self.height_offset_m.is_finite() && self.height_offset_m >= 0.0) {
            return Err(Error::InvalidConfig(
                "trajectory.height_offset_m must be >= 0".into(),
            ));
        }
        if !self.gimbal_tilt_deg.is_finite() {
            return Err(Error::InvalidConfig(
                "trajectory.gimbal_tilt_deg must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Upper bound on the gap between consecutive waypoints: the lateral
    /// step or the arc chord, whichever is larger.
    pub fn max_gap_m(&self, turbine: &TurbineParams) -> f64 {
        let a = self.standoff_m + turbine.rotor_width_m / 2.0;
        let chord = 2.0 * a * (self.arc_step_deg.to_radians() / 2.0).sin();
        self.lateral_step_m.max(chord)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointAction {
    Transit,
    HoldForTrigger,
}

impl WaypointAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            WaypointAction::Transit => "transit",
            WaypointAction::HoldForTrigger => "hold_for_trigger",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transit" => Some(WaypointAction::Transit),
            "hold_for_trigger" => Some(WaypointAction::HoldForTrigger),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryPhase {
    FrontCenter,
    FrontToTip,
    TipTurn,
    BackToCenter,
    OffsetPassHigh,
    OffsetPassLow,
}

impl TrajectoryPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryPhase::FrontCenter => "front_center",
            TrajectoryPhase::FrontToTip => "front_to_tip",
            TrajectoryPhase::TipTurn => "tip_turn",
            TrajectoryPhase::BackToCenter => "back_to_center",
            TrajectoryPhase::OffsetPassHigh => "offset_pass_high",
            TrajectoryPhase::OffsetPassLow => "offset_pass_low",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "front_center" => Some(TrajectoryPhase::FrontCenter),
            "front_to_tip" => Some(TrajectoryPhase::FrontToTip),
            "tip_turn" => Some(TrajectoryPhase::TipTurn),
            "back_to_center" => Some(TrajectoryPhase::BackToCenter),
            "offset_pass_high" => Some(TrajectoryPhase::OffsetPassHigh),
            "offset_pass_low" => Some(TrajectoryPhase::OffsetPassLow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point3,
    pub heading_yaw_rad: f64,
    /// Down-positive.
    pub gimbal_pitch_deg: f64,
    pub action: WaypointAction,
    pub phase: TrajectoryPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub turbine_pose: Pose4,
    pub params: TrajectoryParams,
}

// Hold-point aim targets as fractions of the rotor radius. Aiming exactly at
// the hub would keep some blade in the beam permanently, and aiming exactly
// at the tip puts the hit on the panel boundary; both are clamped away.
const AIM_MIN_FRAC: f64 = 0.1;
const AIM_MAX_FRAC: f64 = 0.9;

#[derive(Clone, Copy)]
struct LocalWp {
    /// Lateral offset along the sweep direction.
    x: f64,
    /// +1 front of the rotor, -1 behind, 0 on the tip arc.
    side: i8,
    /// Arc parameter when on the tip turn.
    alpha: Option<f64>,
    dz: f64,
    /// Gimbal attitude of the pass this waypoint serves: +1 looks down at
    /// the blade line, -1 up, 0 level. Vertical transits keep the attitude
    /// of the pass they lead into.
    pitch_sign: i8,
    phase: TrajectoryPhase,
    hold: bool,
}

/// Generate the inspection trajectory for a turbine localized at `pose`
/// (typically the canonical turbine and the matched pose). Every waypoint
/// keeps at least the standoff from the swept disc.
pub fn generate_trajectory(
    turbine: &TurbineParams,
    pose: &Pose4,
    params: &TrajectoryParams,
) -> Result<Trajectory> {
    turbine.validate()?;
    params.validate(turbine)?;

    let radius = turbine.rotor_radius_m;
    let sweep_len = radius + params.tip_margin_m;
    let axial = params.standoff_m + turbine.rotor_width_m / 2.0;
    let step = params.lateral_step_m;

    // Lateral grid 0..sweep_len, last partial step included.
    let mut offsets = vec![0.0];
    let mut j = 1;
    loop {
        let x = j as f64 * step;
        if x >= sweep_len - 1e-9 {
            offsets.push(sweep_len);
            break;
        }
        offsets.push(x);
        j += 1;
    }

    // Tip arc 0..pi, uniform, step no coarser than requested.
    let arc_segments = (std::f64::consts::PI / params.arc_step_deg.to_radians()).ceil() as usize;
    let arc_segments = arc_segments.max(1);

    let forward_pass = |dz: f64, phases: [TrajectoryPhase; 4]| -> Vec<LocalWp> {
        let pitch_sign = if dz > 1e-9 {
            1
        } else if dz < -1e-9 {
            -1
        } else {
            0
        };
        let mut pass = Vec::new();
        pass.push(LocalWp {
            x: 0.0,
            side: 1,
            alpha: None,
            dz,
            pitch_sign,
            phase: phases[0],
            hold: false,
        });
        for &x in &offsets[1..] {
            pass.push(LocalWp {
                x,
                side: 1,
                alpha: None,
                dz,
                pitch_sign,
                phase: phases[1],
                hold: false,
            });
        }
        for k in 1..=arc_segments {
            let alpha = std::f64::consts::PI * k as f64 / arc_segments as f64;
            pass.push(LocalWp {
                x: sweep_len,
                side: 0,
                alpha: Some(alpha),
                dz,
                pitch_sign,
                phase: phases[2],
                hold: false,
            });
        }
        for &x in offsets[..offsets.len() - 1].iter().rev() {
            pass.push(LocalWp {
                x,
                side: -1,
                alpha: None,
                dz,
                pitch_sign,
                phase: phases[3],
                hold: false,
            });
        }
        pass
    };

    let mark_holds = |pass: &mut Vec<LocalWp>| {
        for side in [1i8, -1i8] {
            for target in [0.0, radius / 2.0, radius] {
                let mut best: Option<(f64, usize)> = None;
                for (i, wp) in pass.iter().enumerate() {
                    if wp.side != side {
                        continue;
                    }
                    let err = (wp.x - target).abs();
                    if best.map_or(true, |(be, _)| err < be) {
                        best = Some((err, i));
                    }
                }
                if let Some((_, i)) = best {
                    pass[i].hold = true;
                }
            }
        }
    };

    let hub_phases = [
        TrajectoryPhase::FrontCenter,
        TrajectoryPhase::FrontToTip,
        TrajectoryPhase::TipTurn,
        TrajectoryPhase::BackToCenter,
    ];
    let mut hub_pass = forward_pass(0.0, hub_phases);
    mark_holds(&mut hub_pass);

    let mut high_pass = forward_pass(params.height_offset_m, [TrajectoryPhase::OffsetPassHigh; 4]);
    mark_holds(&mut high_pass);
    high_pass.reverse();

    let mut low_pass = forward_pass(-params.height_offset_m, [TrajectoryPhase::OffsetPassLow; 4]);
    mark_holds(&mut low_pass);

    // Vertical transits between passes; both junction columns sit at the
    // full axial offset, so the connection never approaches the disc.
    let connector = |from: &LocalWp, to: &LocalWp| -> Vec<LocalWp> {
        let gap = (to.dz - from.dz).abs();
        let mut out = Vec::new();
        if gap > 1e-9 {
            let n = (gap / step).ceil() as usize;
            for k in 1..n {
                let f = k as f64 / n as f64;
                out.push(LocalWp {
                    dz: from.dz + f * (to.dz - from.dz),
                    hold: false,
                    ..*to
                });
            }
        }
        out
    };

    let mut local = hub_pass.clone();
    local.extend(connector(local.last().unwrap(), &high_pass[0]));
    local.extend(high_pass.iter().copied());
    local.extend(connector(local.last().unwrap(), &low_pass[0]));
    local.extend(low_pass.iter().copied());

    // Realize positions and headings in the turbine frame, then pose them.
    let hub = turbine.hub_position;
    let n = turbine.normal_dir();
    let e1 = turbine.lateral_dir();
    let tilt = params.gimbal_tilt_deg;
    let turbine_world = turbine.transformed(pose);

    let mut waypoints = Vec::with_capacity(local.len());
    for wp in &local {
        let position = match wp.alpha {
            Some(alpha) => {
                let (sa, ca) = alpha.sin_cos();
                Point3::new(
                    hub.x + sweep_len * e1[0] + axial * (ca * n[0] + sa * e1[0]),
                    hub.y + sweep_len * e1[1] + axial * (ca * n[1] + sa * e1[1]),
                    hub.z + wp.dz,
                )
            }
            None => {
                let side = wp.side as f64;
                Point3::new(
                    hub.x + side * axial * n[0] + wp.x * e1[0],
                    hub.y + side * axial * n[1] + wp.x * e1[1],
                    hub.z + wp.dz,
                )
            }
        };

        let heading = if wp.hold {
            // Aim at the blade line, clamped away from hub and tip.
            let aim = (wp.x.abs()).clamp(AIM_MIN_FRAC * radius, AIM_MAX_FRAC * radius);
            let target = Point3::new(hub.x + aim * e1[0], hub.y + aim * e1[1], hub.z);
            (target.y - position.y).atan2(target.x - position.x)
        } else {
            match wp.alpha {
                Some(alpha) => {
                    let (sa, ca) = alpha.sin_cos();
                    let dir = [-(ca * n[0] + sa * e1[0]), -(ca * n[1] + sa * e1[1])];
                    dir[1].atan2(dir[0])
                }
                None => {
                    if wp.side >= 0 {
                        wrap_angle(turbine.rotor_normal_yaw + std::f64::consts::PI)
                    } else {
                        turbine.rotor_normal_yaw
                    }
                }
            }
        };

        let pitch = match wp.pitch_sign {
            1 => tilt,
            -1 => -tilt,
            _ => 0.0,
        };

        let posed = pose.apply(&position);
        let wp_out = Waypoint {
            position: posed,
            heading_yaw_rad: wrap_angle(heading + pose.yaw),
            gimbal_pitch_deg: pitch,
            action: if wp.hold {
                WaypointAction::HoldForTrigger
            } else {
                WaypointAction::Transit
            },
            phase: wp.phase,
        };
        let clearance = point_to_disc_distance(&wp_out.position, &turbine_world);
        if clearance < params.standoff_m - 1e-6 {
            return Err(Error::UnsafeStandoff(format!(
                "waypoint at ({:.2}, {:.2}, {:.2}) clears the disc by only {clearance:.3} m",
                wp_out.position.x, wp_out.position.y, wp_out.position.z
            )));
        }
        waypoints.push(wp_out);
    }

    Ok(Trajectory {
        waypoints,
        turbine_pose: *pose,
        params: *params,
    })
}

pub const TRAJECTORY_CSV_HEADER: &str = "index,x,y,z,heading_yaw_rad,gimbal_pitch_deg,action,phase";

pub fn write_trajectory_csv(traj: &Trajectory, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for (i, wp) in traj.waypoints.iter().enumerate() {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            i,
            wp.position.x,
            wp.position.y,
            wp.position.z,
            wp.heading_yaw_rad,
            wp.gimbal_pitch_deg,
            wp.action.as_str(),
            wp.phase.as_str()
        )?;
    }
    Ok(())
}

pub fn export_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trajectory_csv(traj, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(r: impl Read) -> Result<Vec<Waypoint>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            what: "trajectory csv",
            detail: "empty file".into(),
        })?
        .map_err(Error::Io)?;
    if header.trim() != TRAJECTORY_CSV_HEADER {
        return Err(Error::Parse {
            what: "trajectory csv",
            detail: format!("unexpected header: {header}"),
        });
    }
    let mut waypoints = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                what: "trajectory csv",
                detail: format!("row {row}: expected 8 fields, got {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                what: "trajectory csv",
                detail: format!("row {row}: {e}"),
            })
        };
        let action = WaypointAction::parse(fields[6].trim()).ok_or_else(|| Error::Parse {
            what: "trajectory csv",
            detail: format!("row {row}: unknown action {}", fields[6]),
        })?;
        let phase = TrajectoryPhase::parse(fields[7].trim()).ok_or_else(|| Error::Parse {
            what: "trajectory csv",
            detail: format!("row {row}: unknown phase {}", fields[7]),
        })?;
        waypoints.push(Waypoint {
            position: Point3::new(num(1)?, num(2)?, num(3)?),
            heading_yaw_rad: num(4)?,
            gimbal_pitch_deg: num(5)?,
            action,
            phase,
        });
    }
    Ok(waypoints)
}

pub fn import_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<Waypoint>> {
    read_trajectory_csv(File::open(path)?)
}
