//! Reference point cloud of a rotating wind turbine: the pillar cylinder
//! plus the disc the rotor sweeps, sampled uniformly by surface area.
//!
//! The rotor in motion is approximated by a thin cylinder/plate: an
//! accumulating LiDAR sees the trace of the blades, not the blades
//! themselves, so the reference is the swept disc.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Point3, PointCloud, TurbineParams};
use crate::ply;

/// How densely the model surfaces are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSpec {
    /// Points per square meter of surface.
    pub surface_density_per_m2: f64,
    pub rng_seed: u64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            surface_density_per_m2: 1.5,
            rng_seed: 7,
        }
    }
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.surface_density_per_m2.is_finite() && self.surface_density_per_m2 > 0.0) {
            return Err(crate::error::Error::InvalidConfig(
                "model_sampling.surface_density_per_m2 must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Total analytic surface area of the model: pillar lateral surface, both
/// disc faces, and the rim.
pub fn model_surface_area(params: &TurbineParams) -> f64 {
    use std::f64::consts::PI;
    let pillar = 2.0 * PI * params.pillar_radius_m * params.pillar_height_m;
    let faces = 2.0 * PI * params.rotor_radius_m * params.rotor_radius_m;
    let rim = 2.0 * PI * params.rotor_radius_m * params.rotor_width_m;
    pillar + faces + rim
}

/// Sample the turbine surfaces at the requested density. Deterministic for a
/// fixed spec; every point lies exactly on one of the analytic surfaces.
pub fn generate_turbine_model(params: &TurbineParams, spec: &SamplingSpec) -> Result<PointCloud> {
    use std::f64::consts::PI;
    params.validate()?;
    spec.validate()?;

    let density = spec.surface_density_per_m2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let base = params.pillar_base();
    let hub = params.hub_position;
    let n = params.normal_dir();
    let e1 = params.lateral_dir();
    let r_pillar = params.pillar_radius_m;
    let r_rotor = params.rotor_radius_m;
    let half_w = params.rotor_width_m / 2.0;

    let n_pillar = (2.0 * PI * r_pillar * params.pillar_height_m * density).round() as usize;
    let n_face = (PI * r_rotor * r_rotor * density).round() as usize;
    let n_rim = (2.0 * PI * r_rotor * params.rotor_width_m * density).round() as usize;

    let mut points = Vec::with_capacity(n_pillar + 2 * n_face + n_rim);

    for _ in 0..n_pillar {
        let theta = rng.gen_range(0.0..2.0 * PI);
        let z = rng.gen_range(0.0..params.pillar_height_m);
        points.push(Point3::new(
            base.x + r_pillar * theta.cos(),
            base.y + r_pillar * theta.sin(),
            base.z + z,
        ));
    }

    // Disc faces at +-w/2 along the normal; radius sqrt-distributed so the
    // density is uniform by area.
    for sign in [1.0, -1.0] {
        for _ in 0..n_face {
            let r = r_rotor * rng.gen_range(0.0f64..1.0).sqrt();
            let phi = rng.gen_range(0.0..2.0 * PI);
            let (s, c) = phi.sin_cos();
            points.push(Point3::new(
                hub.x + r * c * e1[0] + sign * half_w * n[0],
                hub.y + r * c * e1[1] + sign * half_w * n[1],
                hub.z + r * s,
            ));
        }
    }

    for _ in 0..n_rim {
        let phi = rng.gen_range(0.0..2.0 * PI);
        let a = rng.gen_range(-half_w..half_w);
        let (s, c) = phi.sin_cos();
        points.push(Point3::new(
            hub.x + r_rotor * c * e1[0] + a * n[0],
            hub.y + r_rotor * c * e1[1] + a * n[1],
            hub.z + r_rotor * s,
        ));
    }

    Ok(PointCloud::from_points("turbine_model", points))
}

/// Write the model as PLY.
pub fn export_model(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    ply::write_ply_file(cloud, path)
}
