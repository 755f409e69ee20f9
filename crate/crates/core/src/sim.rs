//! Synthetic LiDAR scanner: a scene of ground plane, turbine pillar,
//! spinning blades, and clutter spheres, sampled by a spinning multi-channel
//! sensor on a climbing platform. Stands in for field recordings.
//!
//! Blades are flat panels in the rotor plane, spanning hub to tip; their
//! accumulated returns over a climb trace out the swept disc the reference
//! model approximates.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Pose4, TurbineParams};
use crate::ply;

const RAY_EPS: f64 = 1e-9;

/// A clutter sphere, e.g. a bush near the tower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    pub center: Point3,
    pub radius_m: f64,
}

/// Everything the rays can hit, plus the rotor kinematics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    /// None removes the turbine from the scene entirely.
    pub turbine: Option<TurbineParams>,
    pub blade_count: u32,
    pub blade_chord_m: f64,
    /// Rotor angular speed, rad/s.
    pub rotor_speed_rad_s: f64,
    pub initial_blade_phase_rad: f64,
    pub clutter: Vec<Sphere>,
    /// None removes the ground plane.
    pub ground_z: Option<f64>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            turbine: Some(TurbineParams::default()),
            blade_count: 3,
            blade_chord_m: 2.0,
            rotor_speed_rad_s: 0.6,
            initial_blade_phase_rad: 0.0,
            clutter: Vec::new(),
            ground_z: Some(0.0),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = &self.turbine {
            t.validate()?;
        }
        if self.blade_count < 1 {
            return Err(Error::InvalidConfig("scene.blade_count must be >= 1".into()));
        }
        if !(self.blade_chord_m.is_finite() && self.blade_chord_m > 0.0) {
            return Err(Error::InvalidConfig("scene.blade_chord_m must be > 0".into()));
        }
        if !(self.rotor_speed_rad_s.is_finite() && self.rotor_speed_rad_s >= 0.0) {
            return Err(Error::InvalidConfig(
                "scene.rotor_speed_rad_s must be >= 0".into(),
            ));
        }
        for (i, s) in self.clutter.iter().enumerate() {
            if !(s.radius_m.is_finite() && s.radius_m > 0.0) || !s.center.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "scene.clutter[{i}] must have finite center and radius > 0"
                )));
            }
        }
        Ok(())
    }

    /// Angle of blade `i` in the rotor plane at time `t`, measured from the
    /// in-plane horizontal axis.
    pub fn blade_angle(&self, blade: u32, t: f64) -> f64 {
        self.initial_blade_phase_rad
            + self.rotor_speed_rad_s * t
            + 2.0 * std::f64::consts::PI * blade as f64 / self.blade_count as f64
    }
}

/// Generic spinning LiDAR description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    pub channels: u32,
    /// (low, high) elevation limits in degrees.
    pub vertical_fov_deg: (f64, f64),
    pub azimuth_step_deg: f64,
    pub max_range_m: f64,
    pub range_noise_sigma_m: f64,
    pub scan_rate_hz: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            channels: 32,
            vertical_fov_deg: (-22.5, 22.5),
            azimuth_step_deg: 0.35,
            max_range_m: 100.0,
            range_noise_sigma_m: 0.02,
            scan_rate_hz: 10.0,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 1 {
            return Err(Error::InvalidConfig("sensor.channels must be >= 1".into()));
        }
        if !(self.azimuth_step_deg.is_finite() && self.azimuth_step_deg > 0.0) {
            return Err(Error::InvalidConfig(
                "sensor.azimuth_step_deg must be > 0".into(),
            ));
        }
        if !(self.max_range_m.is_finite() && self.max_range_m > 0.0) {
            return Err(Error::InvalidConfig("sensor.max_range_m must be > 0".into()));
        }
        if !(self.range_noise_sigma_m.is_finite() && self.range_noise_sigma_m >= 0.0) {
            return Err(Error::InvalidConfig(
                "sensor.range_noise_sigma_m must be >= 0".into(),
            ));
        }
        if !(self.scan_rate_hz.is_finite() && self.scan_rate_hz > 0.0) {
            return Err(Error::InvalidConfig("sensor.scan_rate_hz must be > 0".into()));
        }
        if !(self.vertical_fov_deg.0.is_finite()
            && self.vertical_fov_deg.1.is_finite()
            && self.vertical_fov_deg.0 <= self.vertical_fov_deg.1)
        {
            return Err(Error::InvalidConfig(
                "sensor.vertical_fov_deg must be an ordered pair".into(),
            ));
        }
        Ok(())
    }
}

/// One LiDAR sweep: points in the sensor frame plus the ground-truth pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    pub cloud: PointCloud,
    pub sensor_pose: Pose4,
    pub timestamp_s: f64,
}

/// What a ray struck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitKind {
    Ground,
    Pillar,
    Blade(u32),
    Clutter(usize),
}

/// Scene geometry frozen at one instant; blade angles are evaluated once,
/// not per ray.
pub struct FrameCaster<'a> {
    scene: &'a SceneSpec,
    // (sin, cos) of each blade angle at the frozen time.
    blade_trig: Vec<(f64, f64)>,
}

impl<'a> FrameCaster<'a> {
    pub fn new(scene: &'a SceneSpec, t: f64) -> Self {
        let blade_trig = (0..scene.blade_count)
            .map(|i| {
                let theta = scene.blade_angle(i, t);
                (theta.sin(), theta.cos())
            })
            .collect();
        Self { scene, blade_trig }
    }

    /// Nearest intersection of a world-frame ray with the scene. `dir` must
    /// be unit length. Returns (range, kind).
    pub fn cast(&self, origin: &Point3, dir: [f64; 3]) -> Option<(f64, HitKind)> {
        let scene = self.scene;
        let mut best: Option<(f64, HitKind)> = None;
        let mut consider = |s: f64, kind: HitKind| {
            if s > RAY_EPS && best.map_or(true, |(bs, _)| s < bs) {
                best = Some((s, kind));
            }
        };

        if let Some(gz) = scene.ground_z {
            if dir[2].abs() > RAY_EPS {
                let s = (gz - origin.z) / dir[2];
                consider(s, HitKind::Ground);
            }
        }

        if let Some(turbine) = &scene.turbine {
            // Pillar: finite vertical cylinder, lateral surface only.
            let base = turbine.pillar_base();
            let ox = origin.x - base.x;
            let oy = origin.y - base.y;
            let a = dir[0] * dir[0] + dir[1] * dir[1];
            if a > RAY_EPS * RAY_EPS {
                let b = 2.0 * (ox * dir[0] + oy * dir[1]);
                let c = ox * ox + oy * oy - turbine.pillar_radius_m * turbine.pillar_radius_m;
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    for s in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                        let z = origin.z + s * dir[2];
                        if z >= base.z && z <= base.z + turbine.pillar_height_m {
                            consider(s, HitKind::Pillar);
                        }
                    }
                }
            }

            // Blades: flat panels in the rotor plane.
            let n = turbine.normal_dir();
            let e1 = turbine.lateral_dir();
            let hub = turbine.hub_position;
            let denom = n[0] * dir[0] + n[1] * dir[1] + n[2] * dir[2];
            if denom.abs() > RAY_EPS {
                let s = (n[0] * (hub.x - origin.x)
                    + n[1] * (hub.y - origin.y)
                    + n[2] * (hub.z - origin.z))
                    / denom;
                if s > RAY_EPS {
                    let hx = origin.x + s * dir[0] - hub.x;
                    let hy = origin.y + s * dir[1] - hub.y;
                    let hz = origin.z + s * dir[2] - hub.z;
                    let c1 = hx * e1[0] + hy * e1[1];
                    let c2 = hz;
                    let half_chord = scene.blade_chord_m / 2.0;
                    for (i, &(st, ct)) in self.blade_trig.iter().enumerate() {
                        let u = c1 * ct + c2 * st;
                        let v = -c1 * st + c2 * ct;
                        if u >= 0.0 && u <= turbine.rotor_radius_m && v.abs() <= half_chord {
                            consider(s, HitKind::Blade(i as u32));
                            break;
                        }
                    }
                }
            }
        }

        for (i, sphere) in scene.clutter.iter().enumerate() {
            let ox = origin.x - sphere.center.x;
            let oy = origin.y - sphere.center.y;
            let oz = origin.z - sphere.center.z;
            let b = 2.0 * (ox * dir[0] + oy * dir[1] + oz * dir[2]);
            let c = ox * ox + oy * oy + oz * oz - sphere.radius_m * sphere.radius_m;
            let disc = b * b - 4.0 * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                consider((-b - sq) / 2.0, HitKind::Clutter(i));
                consider((-b + sq) / 2.0, HitKind::Clutter(i));
            }
        }

        best
    }
}

/// Nearest intersection of a world-frame ray with the scene at time `t`.
pub fn cast_ray(scene: &SceneSpec, origin: &Point3, dir: [f64; 3], t: f64) -> Option<(f64, HitKind)> {
    FrameCaster::new(scene, t).cast(origin, dir)
}

fn scan_with_rng(
    scene: &SceneSpec,
    sensor: &SensorSpec,
    sensor_pose: &Pose4,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> PointCloud {
    let noise = if sensor.range_noise_sigma_m > 0.0 {
        Some(Normal::new(0.0, sensor.range_noise_sigma_m).expect("sigma >= 0"))
    } else {
        None
    };

    let origin = Point3::new(sensor_pose.tx, sensor_pose.ty, sensor_pose.tz);
    let (fov_lo, fov_hi) = sensor.vertical_fov_deg;
    let channels = sensor.channels;
    let mut elevations = Vec::with_capacity(channels as usize);
    if channels == 1 {
        elevations.push(((fov_lo + fov_hi) / 2.0).to_radians().sin_cos());
    } else {
        for c in 0..channels {
            let f = c as f64 / (channels - 1) as f64;
            elevations.push((fov_lo + f * (fov_hi - fov_lo)).to_radians().sin_cos());
        }
    }

    let caster = FrameCaster::new(scene, t);
    let mut points = Vec::new();
    let mut k = 0u32;
    loop {
        let az_deg = k as f64 * sensor.azimuth_step_deg;
        if az_deg >= 360.0 - 1e-9 {
            break;
        }
        let (saz, caz) = az_deg.to_radians().sin_cos();
        for &(sel, cel) in &elevations {
            let dir_sensor = [cel * caz, cel * saz, sel];
            let dir_world = sensor_pose.rotate(dir_sensor);
            if let Some((range, _)) = caster.cast(&origin, dir_world) {
                if range <= sensor.max_range_m {
                    let measured = match &noise {
                        Some(n) => range + n.sample(rng),
                        None => range,
                    };
                    points.push(Point3::new(
                        measured * dir_sensor[0],
                        measured * dir_sensor[1],
                        measured * dir_sensor[2],
                    ));
                }
            }
        }
        k += 1;
    }
    PointCloud::from_points("sensor", points)
}

/// One full sweep at time `t`. Deterministic for a fixed seed.
pub fn simulate_scan(
    scene: &SceneSpec,
    sensor: &SensorSpec,
    sensor_pose: &Pose4,
    t: f64,
    seed: u64,
) -> ScanFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScanFrame {
        cloud: scan_with_rng(scene, sensor, sensor_pose, t, &mut rng),
        sensor_pose: *sensor_pose,
        timestamp_s: t,
    }
}

/// Scans emitted at the sensor rate while the platform climbs at
/// `climb_rate_m_s`; the rotor advances with time. Frame `k` is taken at
/// `t = k / scan_rate_hz`.
pub fn simulate_climb(
    scene: &SceneSpec,
    sensor: &SensorSpec,
    start_pose: &Pose4,
    climb_rate_m_s: f64,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<ScanFrame>> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidConfig("duration_s must be > 0".into()));
    }
    scene.validate()?;
    sensor.validate()?;
    let n_frames = ((duration_s * sensor.scan_rate_hz).round() as usize).max(1);
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = k as f64 / sensor.scan_rate_hz;
        let pose = Pose4::new(
            start_pose.tx,
            start_pose.ty,
            start_pose.tz + climb_rate_m_s * t,
            start_pose.yaw,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        frames.push(ScanFrame {
            cloud: scan_with_rng(scene, sensor, &pose, t, &mut rng),
            sensor_pose: pose,
            timestamp_s: t,
        });
    }
    Ok(frames)
}

/// Write one PLY per frame plus a pose index:
/// `frame,timestamp_s,tx,ty,tz,yaw`.
pub fn write_frames(dir: impl AsRef<Path>, frames: &[ScanFrame]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut index = BufWriter::new(File::create(dir.join("index.csv"))?);
    writeln!(index, "frame,timestamp_s,tx,ty,tz,yaw")?;
    for (k, frame) in frames.iter().enumerate() {
        writeln!(
            index,
            "{},{},{},{},{},{}",
            k,
            frame.timestamp_s,
            frame.sensor_pose.tx,
            frame.sensor_pose.ty,
            frame.sensor_pose.tz,
            frame.sensor_pose.yaw
        )?;
        ply::write_ply_file(&frame.cloud, dir.join(format!("frame_{k:04}.ply")))?;
    }
    index.flush()?;
    Ok(())
}

/// Read back a frame directory written by `write_frames`.
pub fn read_frames(dir: impl AsRef<Path>) -> Result<Vec<ScanFrame>> {
    let dir = dir.as_ref();
    let index = File::open(dir.join("index.csv"))?;
    let mut lines = BufReader::new(index).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            what: "frame index",
            detail: "empty index.csv".into(),
        })?
        .map_err(Error::Io)?;
    if header.trim() != "frame,timestamp_s,tx,ty,tz,yaw" {
        return Err(Error::Parse {
            what: "frame index",
            detail: format!("unexpected header: {header}"),
        });
    }
    let mut frames = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (row, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                what: "frame index",
                detail: format!("row {row}: expected 6 fields, got {}", fields.len()),
            });
        }
        let parse = |i: usize| -> Result<f64> {
            fields[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                what: "frame index",
                detail: format!("row {row}: {e}"),
            })
        };
        let k: usize = fields[0].trim().parse().map_err(|e| Error::Parse {
            what: "frame index",
            detail: format!("row {row}: {e}"),
        })?;
        let t = parse(1)?;
        if t <= last_t {
            return Err(Error::Parse {
                what: "frame index",
                detail: format!("row {row}: timestamps not strictly increasing"),
            });
        }
        last_t = t;
        let pose = Pose4::new(parse(2)?, parse(3)?, parse(4)?, parse(5)?);
        let cloud = ply::read_ply_file(dir.join(format!("frame_{k:04}.ply")))?;
        frames.push(ScanFrame {
            cloud,
            sensor_pose: pose,
            timestamp_s: t,
        });
    }
    Ok(frames)
}
