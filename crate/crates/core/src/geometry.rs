//! Shared geometric types: points, clouds, 4-DOF poses, turbine parameters.
//!
//! Coordinate convention: z-up, right-handed; yaw is rotation about +z,
//! counterclockwise from +x, normalized to (-pi, pi]. Poses carry translation
//! plus yaw only; roll and pitch are identically zero by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalize an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// A point in meters. Coordinates are expected to be finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn offset(&self, dx: f64, dy: f64, dz: f64) -> Point3 {
        Point3::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

/// An ordered list of points with a frame label. Order carries no meaning
/// beyond reproducible iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            frame_id: frame_id.into(),
        }
    }

    pub fn from_points(frame_id: impl Into<String>, points: Vec<Point3>) -> Self {
        Self {
            points,
            frame_id: frame_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(Point3::is_finite)
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sz = 0.0;
        for p in &self.points {
            sx += p.x;
            sy += p.y;
            sz += p.z;
        }
        let n = self.points.len() as f64;
        Some(Point3::new(sx / n, sy / n, sz / n))
    }

    /// Axis-aligned bounding box as (min, max), None when empty.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            lo.z = lo.z.min(p.z);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
            hi.z = hi.z.max(p.z);
        }
        Some((lo, hi))
    }

    /// Apply a pose to every point; the label is preserved.
    pub fn transformed(&self, pose: &Pose4) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            frame_id: self.frame_id.clone(),
        }
    }
}

/// Rotate every point about the vertical axis by the pose yaw, then translate.
pub fn transform(cloud: &PointCloud, pose: &Pose4) -> PointCloud {
    cloud.transformed(pose)
}

/// A 4-DOF rigid transform: translation plus yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Pose4 {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    /// Radians in (-pi, pi].
    pub yaw: f64,
}

impl Default for Pose4 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose4 {
    pub fn new(tx: f64, ty: f64, tz: f64, yaw: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            tz: 0.0,
            yaw: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tx.is_finite() && self.ty.is_finite() && self.tz.is_finite() && self.yaw.is_finite()
    }

    /// Rotate a direction by the pose yaw without translating.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let r = self.rotate([p.x, p.y, p.z]);
        Point3::new(r[0] + self.tx, r[1] + self.ty, r[2] + self.tz)
    }

    /// self after other: (self * other)(p) = self(other(p)).
    pub fn compose(&self, other: &Pose4) -> Pose4 {
        let t = self.rotate([other.tx, other.ty, other.tz]);
        Pose4::new(
            t[0] + self.tx,
            t[1] + self.ty,
            t[2] + self.tz,
            self.yaw + other.yaw,
        )
    }

    pub fn inverse(&self) -> Pose4 {
        let (s, c) = (-self.yaw).sin_cos();
        let ix = c * self.tx - s * self.ty;
        let iy = s * self.tx + c * self.ty;
        Pose4::new(-ix, -iy, -self.tz, -self.yaw)
    }
}

/// Parameters of the pillar-plus-rotor-trace turbine model.
///
/// `hub_position` is the center of the swept rotor disc. The pillar stands
/// `rotor_overhang_m` behind the disc along the rotor normal, so the model
/// has no 180-degree yaw symmetry and the matched yaw is unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbineParams {
    /// Pillar height H; the hub sits H above the pillar base.
    pub pillar_height_m: f64,
    /// Rotor radius R.
    pub rotor_radius_m: f64,
    /// Rotor trace thickness w.
    pub rotor_width_m: f64,
    /// Pillar cylinder radius. The reference never reports one; tower scale.
    pub pillar_radius_m: f64,
    /// Horizontal offset of the disc center ahead of the pillar axis.
    pub rotor_overhang_m: f64,
    /// Center of the swept rotor disc, world frame.
    pub hub_position: Point3,
    /// Yaw of the disc normal (the rotor axis), radians.
    pub rotor_normal_yaw: f64,
}

impl Default for TurbineParams {
    fn default() -> Self {
        Self {
            pillar_height_m: 45.0,
            rotor_radius_m: 30.0,
            rotor_width_m: 1.0,
            pillar_radius_m: 1.5,
            rotor_overhang_m: 2.5,
            hub_position: Point3::new(0.0, 0.0, 45.0),
            rotor_normal_yaw: 0.0,
        }
    }
}

impl TurbineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pillar_height_m.is_finite() && self.pillar_height_m > 0.0) {
            return Err(Error::InvalidTurbineParams("pillar_height_m must be > 0"));
        }
        if !(self.rotor_radius_m.is_finite() && self.rotor_radius_m > 0.0) {
            return Err(Error::InvalidTurbineParams("rotor_radius_m must be > 0"));
        }
        if !(self.rotor_width_m.is_finite() && self.rotor_width_m > 0.0) {
            return Err(Error::InvalidTurbineParams("rotor_width_m must be > 0"));
        }
        if !(self.pillar_radius_m.is_finite() && self.pillar_radius_m > 0.0) {
            return Err(Error::InvalidTurbineParams("pillar_radius_m must be > 0"));
        }
        if !(self.rotor_overhang_m.is_finite() && self.rotor_overhang_m >= 0.0) {
            return Err(Error::InvalidTurbineParams("rotor_overhang_m must be >= 0"));
        }
        if !self.hub_position.is_finite() {
            return Err(Error::InvalidTurbineParams("hub_position must be finite"));
        }
        if !self.rotor_normal_yaw.is_finite() {
            return Err(Error::InvalidTurbineParams("rotor_normal_yaw must be finite"));
        }
        Ok(())
    }

    /// Unit rotor normal (horizontal).
    pub fn normal_dir(&self) -> [f64; 3] {
        let (s, c) = self.rotor_normal_yaw.sin_cos();
        [c, s, 0.0]
    }

    /// Unit in-plane horizontal direction (normal rotated +90 degrees).
    pub fn lateral_dir(&self) -> [f64; 3] {
        let (s, c) = self.rotor_normal_yaw.sin_cos();
        [-s, c, 0.0]
    }

    /// Base of the pillar: overhang behind the hub, H below it.
    pub fn pillar_base(&self) -> Point3 {
        let n = self.normal_dir();
        Point3::new(
            self.hub_position.x - self.rotor_overhang_m * n[0],
            self.hub_position.y - self.rotor_overhang_m * n[1],
            self.hub_position.z - self.pillar_height_m,
        )
    }

    /// Same turbine re-expressed in its own frame: pillar base at the origin,
    /// rotor normal along +x. This is the frame the reference model cloud is
    /// generated in; the matched pose maps it back to the world.
    pub fn canonical(&self) -> TurbineParams {
        TurbineParams {
            hub_position: Point3::new(self.rotor_overhang_m, 0.0, self.pillar_height_m),
            rotor_normal_yaw: 0.0,
            ..*self
        }
    }

    /// Pose mapping the canonical frame onto this turbine's placement.
    pub fn ground_truth_pose(&self) -> Pose4 {
        let base = self.pillar_base();
        Pose4::new(base.x, base.y, base.z, self.rotor_normal_yaw)
    }

    /// This turbine moved by `pose`.
    pub fn transformed(&self, pose: &Pose4) -> TurbineParams {
        TurbineParams {
            hub_position: pose.apply(&self.hub_position),
            rotor_normal_yaw: wrap_angle(self.rotor_normal_yaw + pose.yaw),
            ..*self
        }
    }
}

/// Euclidean distance from a point to the closed swept-rotor disc: the squat
/// cylinder of radius R and thickness w centered at the hub, axis along the
/// rotor normal. Zero inside.
pub fn point_to_disc_distance(p: &Point3, params: &TurbineParams) -> f64 {
    let n = params.normal_dir();
    let hub = params.hub_position;
    let d = [p.x - hub.x, p.y - hub.y, p.z - hub.z];
    let axial = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
    let rx = d[0] - axial * n[0];
    let ry = d[1] - axial * n[1];
    let rz = d[2] - axial * n[2];
    let radial = (rx * rx + ry * ry + rz * rz).sqrt();

    let half_w = params.rotor_width_m / 2.0;
    let axial_excess = axial.abs() - half_w;
    let radial_excess = radial - params.rotor_radius_m;

    if axial_excess <= 0.0 && radial_excess <= 0.0 {
        0.0
    } else if radial_excess <= 0.0 {
        axial_excess
    } else if axial_excess <= 0.0 {
        radial_excess
    } else {
        (axial_excess * axial_excess + radial_excess * radial_excess).sqrt()
    }
}
