//! Camera trigger simulation: a laser rangefinder watches the rotor plane
//! from each hold point and fires the camera when a blade sweeps through the
//! beam. Rising-edge semantics with a debounce interval, so a slow blade
//! occupying the beam produces one shot, not a burst.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::sim::{cast_ray, HitKind, SceneSpec};
use crate::trajectory::{Waypoint, WaypointAction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerConfig {
    /// Fire when the measured range drops below this.
    pub gate_range_m: f64,
    /// Minimum interval between triggers.
    pub debounce_s: f64,
    pub rangefinder_rate_hz: f64,
    pub range_noise_sigma_m: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            gate_range_m: 12.0,
            debounce_s: 0.3,
            rangefinder_rate_hz: 100.0,
            range_noise_sigma_m: 0.05,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_range_m.is_finite() && self.gate_range_m > 0.0) {
            return Err(Error::InvalidConfig(
                "trigger.gate_range_m must be > 0".into(),
            ));
        }
        if !(self.debounce_s.is_finite() && self.debounce_s >= 0.0) {
            return Err(Error::InvalidConfig("trigger.debounce_s must be >= 0".into()));
        }
        if !(self.rangefinder_rate_hz.is_finite() && self.rangefinder_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(
                "trigger.rangefinder_rate_hz must be > 0".into(),
            ));
        }
        if !(self.range_noise_sigma_m.is_finite() && self.range_noise_sigma_m >= 0.0) {
            return Err(Error::InvalidConfig(
                "trigger.range_noise_sigma_m must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub timestamp_s: f64,
    pub measured_range_m: f64,
    /// Which blade the beam actually struck; ground truth for tests, None
    /// when the return came from something else.
    pub blade_index: Option<u32>,
}

/// One pass of a blade through a beam: the beam is inside the blade's
/// angular footprint between `enter_s` and `exit_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BladeCrossing {
    pub enter_s: f64,
    pub exit_s: f64,
    pub blade_index: u32,
}

/// Closed-form blade crossing intervals for a fixed beam over `[0,
/// horizon_s]`. The beam's hit point on the rotor plane has an angular
/// position; blade i covers it whenever the blade angle is within the
/// half-width `chord / (2 * hit_radius)` of it. Empty when the beam misses
/// the disc.
pub fn blade_crossing_times(
    scene: &SceneSpec,
    ray_origin: &Point3,
    ray_dir: [f64; 3],
    horizon_s: f64,
) -> Vec<BladeCrossing> {
    let Some(turbine) = &scene.turbine else {
        return Vec::new();
    };
    let n = turbine.normal_dir();
    let e1 = turbine.lateral_dir();
    let hub = turbine.hub_position;

    let denom = n[0] * ray_dir[0] + n[1] * ray_dir[1] + n[2] * ray_dir[2];
    if denom.abs() < 1e-12 {
        return Vec::new();
    }
    let s = (n[0] * (hub.x - ray_origin.x)
        + n[1] * (hub.y - ray_origin.y)
        + n[2] * (hub.z - ray_origin.z))
        / denom;
    if s <= 0.0 {
        return Vec::new();
    }
    let hx = ray_origin.x + s * ray_dir[0] - hub.x;
    let hy = ray_origin.y + s * ray_dir[1] - hub.y;
    let hz = ray_origin.z + s * ray_dir[2] - hub.z;
    let c1 = hx * e1[0] + hy * e1[1];
    let c2 = hz;
    let hit_radius = (c1 * c1 + c2 * c2).sqrt();
    if hit_radius > turbine.rotor_radius_m || hit_radius < 1e-9 {
        return Vec::new();
    }
    let phi = c2.atan2(c1);
    let half_width = (scene.blade_chord_m / (2.0 * hit_radius)).min(std::f64::consts::PI);

    let omega = scene.rotor_speed_rad_s;
    let two_pi = std::f64::consts::TAU;
    let mut crossings = Vec::new();
    for blade in 0..scene.blade_count {
        let theta0 = scene.blade_angle(blade, 0.0);
        if omega == 0.0 {
            let mut delta = (phi - theta0) % two_pi;
            if delta > std::f64::consts::PI {
                delta -= two_pi;
            } else if delta < -std::f64::consts::PI {
                delta += two_pi;
            }
            if delta.abs() <= half_width {
                crossings.push(BladeCrossing {
                    enter_s: 0.0,
                    exit_s: horizon_s,
                    blade_index: blade,
                });
            }
            continue;
        }
        // First center-crossing time at or after -half_width transit.
        let base = ((phi - theta0) / omega).rem_euclid(two_pi / omega);
        let period = two_pi / omega;
        let transit_half = half_width / omega;
        let mut k = -1i64;
        loop {
            let center = base + k as f64 * period;
            let enter = center - transit_half;
            let exit = center + transit_half;
            if enter > horizon_s {
                break;
            }
            if exit >= 0.0 {
                crossings.push(BladeCrossing {
                    enter_s: enter.max(0.0),
                    exit_s: exit.min(horizon_s),
                    blade_index: blade,
                });
            }
            k += 1;
        }
    }
    crossings.sort_by(|a, b| {
        a.enter_s
            .partial_cmp(&b.enter_s)
            .unwrap()
            .then(a.blade_index.cmp(&b.blade_index))
    });
    crossings
}

fn trigger_with_rng(
    scene: &SceneSpec,
    ray_origin: &Point3,
    ray_dir: [f64; 3],
    cfg: &TriggerConfig,
    horizon_s: f64,
    time_offset_s: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<TriggerEvent> {
    let noise = if cfg.range_noise_sigma_m > 0.0 {
        Some(Normal::new(0.0, cfg.range_noise_sigma_m).expect("sigma >= 0"))
    } else {
        None
    };
    let dt = 1.0 / cfg.rangefinder_rate_hz;
    let samples = (horizon_s * cfg.rangefinder_rate_hz).floor() as usize + 1;

    let mut events = Vec::new();
    let mut prev_below = false;
    let mut last_trigger: Option<f64> = None;
    for k in 0..samples {
        let t = k as f64 * dt;
        let eps = noise.as_ref().map_or(0.0, |n| n.sample(rng));
        let hit = cast_ray(scene, ray_origin, ray_dir, time_offset_s + t);
        let below = match hit {
            Some((range, _)) => range + eps < cfg.gate_range_m,
            None => false,
        };
        if below && !prev_below {
            let debounced = last_trigger.map_or(true, |lt| t - lt >= cfg.debounce_s - 1e-12);
            if debounced {
                let (range, kind) = hit.expect("below implies hit");
                events.push(TriggerEvent {
                    timestamp_s: time_offset_s + t,
                    measured_range_m: range + eps,
                    blade_index: match kind {
                        HitKind::Blade(i) => Some(i),
                        _ => None,
                    },
                });
                last_trigger = Some(t);
            }
        }
        prev_below = below;
    }
    events
}

/// Sample the rangefinder along a fixed beam and emit camera trigger events.
/// Deterministic per seed.
pub fn simulate_trigger(
    scene: &SceneSpec,
    ray_origin: &Point3,
    ray_dir: [f64; 3],
    cfg: &TriggerConfig,
    horizon_s: f64,
    seed: u64,
) -> Vec<TriggerEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    trigger_with_rng(scene, ray_origin, ray_dir, cfg, horizon_s, 0.0, &mut rng)
}

/// Trigger record for one hold waypoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldReport {
    /// Index into the trajectory waypoint list.
    pub waypoint_index: usize,
    pub event_count: usize,
    /// Events attributed to each blade, by blade index.
    pub per_blade: Vec<u64>,
    #[serde(skip)]
    pub events: Vec<TriggerEvent>,
}

/// Coverage over a whole inspection run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectionReport {
    pub blade_count: u32,
    pub dwell_s_per_hold: f64,
    pub holds: Vec<HoldReport>,
    pub total_events: usize,
    pub per_blade_totals: Vec<u64>,
}

/// Visit every hold waypoint in order, aim the rangefinder along its
/// heading and gimbal pitch, and dwell for `dwell_s_per_hold`. The rotor
/// keeps turning across the whole run, so timestamps are global and
/// strictly increasing.
pub fn run_inspection(
    waypoints: &[Waypoint],
    scene: &SceneSpec,
    cfg: &TriggerConfig,
    dwell_s_per_hold: f64,
    seed: u64,
) -> Result<InspectionReport> {
    cfg.validate()?;
    scene.validate()?;
    if !(dwell_s_per_hold.is_finite() && dwell_s_per_hold > 0.0) {
        return Err(Error::InvalidConfig("dwell_s_per_hold must be > 0".into()));
    }

    let blade_count = scene.blade_count;
    let mut holds = Vec::new();
    let mut total_events = 0usize;
    let mut per_blade_totals = vec![0u64; blade_count as usize];

    let hold_indices: Vec<usize> = waypoints
        .iter()
        .enumerate()
        .filter(|(_, w)| w.action == WaypointAction::HoldForTrigger)
        .map(|(i, _)| i)
        .collect();

    for (ord, &wi) in hold_indices.iter().enumerate() {
        let wp = &waypoints[wi];
        let pitch = wp.gimbal_pitch_deg.to_radians();
        let (sy, cy) = wp.heading_yaw_rad.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let dir = [cp * cy, cp * sy, -sp];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ord as u64);
        let events = trigger_with_rng(
            scene,
            &wp.position,
            dir,
            cfg,
            dwell_s_per_hold,
            ord as f64 * dwell_s_per_hold,
            &mut rng,
        );
        let mut per_blade = vec![0u64; blade_count as usize];
        for e in &events {
            if let Some(b) = e.blade_index {
                per_blade[b as usize] += 1;
                per_blade_totals[b as usize] += 1;
            }
        }
        total_events += events.len();
        holds.push(HoldReport {
            waypoint_index: wi,
            event_count: events.len(),
            per_blade,
            events,
        });
    }

    Ok(InspectionReport {
        blade_count,
        dwell_s_per_hold,
        holds,
        total_events,
        per_blade_totals,
    })
}

/// Events CSV: `waypoint_index,timestamp_s,measured_range_m`.
pub fn write_events_csv(report: &InspectionReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "waypoint_index,timestamp_s,measured_range_m")?;
    for hold in &report.holds {
        for e in &hold.events {
            writeln!(
                w,
                "{},{:.6},{:.6}",
                hold.waypoint_index, e.timestamp_s, e.measured_range_m
            )?;
        }
    }
    Ok(())
}
