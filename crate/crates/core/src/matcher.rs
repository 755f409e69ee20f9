//! Back half of the matching chain: evaluate each cluster against the
//! reference model with 4-DOF ICP and keep the best match.
//!
//! The pose is constrained to translation plus yaw; pitch and roll stay
//! zero under the assumption that the platform remains upright. The match
//! score is the mean squared distance from every model point to its nearest
//! target point after alignment, in m^2; lower is better, and a converged
//! score below 1.0 counts as satisfactory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point3, PointCloud, Pose4};
use crate::preprocess::{cluster_cloud, ClusterSet};
use crate::spatial::NearestNeighborIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpConfig {
    pub max_iterations: u32,
    /// Translation convergence threshold, meters.
    pub convergence_eps_m: f64,
    /// Yaw convergence threshold, radians.
    pub convergence_eps_rad: f64,
    /// Correspondences farther than this are dropped from the update step.
    /// Scoring always uses every model point.
    pub max_correspondence_m: f64,
    /// Initial yaw hypotheses; the swept disc has shallow minima a quarter
    /// turn apart.
    pub yaw_seeds_rad: Vec<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        // Translation settles slowly on sparse voxelized discs; the budget
        // leaves room for the millimeter epsilons to actually trip.
        Self {
            max_iterations: 200,
            convergence_eps_m: 1e-3,
            convergence_eps_rad: 1e-3,
            max_correspondence_m: 5.0,
            yaw_seeds_rad: vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2],
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("icp.max_iterations must be >= 1".into()));
        }
        if !(self.convergence_eps_m.is_finite() && self.convergence_eps_m > 0.0) {
            return Err(Error::InvalidConfig(
                "icp.convergence_eps_m must be > 0".into(),
            ));
        }
        if !(self.convergence_eps_rad.is_finite() && self.convergence_eps_rad > 0.0) {
            return Err(Error::InvalidConfig(
                "icp.convergence_eps_rad must be > 0".into(),
            ));
        }
        if !(self.max_correspondence_m.is_finite() && self.max_correspondence_m > 0.0) {
            return Err(Error::InvalidConfig(
                "icp.max_correspondence_m must be > 0".into(),
            ));
        }
        if self.yaw_seeds_rad.is_empty() {
            return Err(Error::InvalidConfig(
                "icp.yaw_seeds_rad must not be empty".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a single ICP run.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    /// Model-to-target transform.
    pub pose: Pose4,
    /// Mean squared model-to-target distance at the final pose, m^2.
    /// `INFINITY` when an iteration had no correspondences in range.
    pub score: f64,
    pub converged: bool,
    pub iterations_used: u32,
    /// Score before any update, then after each update; non-increasing when
    /// no correspondences are trimmed.
    pub score_trace: Vec<f64>,
}

/// Best match over all clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub cluster_index: usize,
    pub score: f64,
    pub pose: Pose4,
    pub converged: bool,
    pub iterations: u32,
}

/// Mean squared distance from each posed model point to its nearest target
/// point.
pub fn match_score(model: &PointCloud, target: &PointCloud, pose: &Pose4) -> Result<f64> {
    if model.is_empty() {
        return Err(Error::EmptyCloud("model"));
    }
    let index = NearestNeighborIndex::build(target)?;
    let mut sum = 0.0;
    for p in model.iter() {
        let q = pose.apply(p);
        let (_, d) = index.nearest(&q);
        sum += d * d;
    }
    Ok(sum / model.len() as f64)
}

/// Closed-form least-squares pose restricted to (tx, ty, tz, yaw): yaw from
/// the 2D cross-covariance angle of the paired xy coordinates, translation
/// from the centroids. Falls back to `prev_yaw` when the pairs carry no
/// horizontal information.
fn solve_pairs(
    model: &[Point3],
    target: &[Point3],
    pairs: &[(u32, u32)],
    prev_yaw: f64,
) -> Pose4 {
    let n = pairs.len() as f64;
    let mut pc = [0.0f64; 3];
    let mut qc = [0.0f64; 3];
    for &(pi, qi) in pairs {
        let p = model[pi as usize];
        let q = target[qi as usize];
        pc[0] += p.x;
        pc[1] += p.y;
        pc[2] += p.z;
        qc[0] += q.x;
        qc[1] += q.y;
        qc[2] += q.z;
    }
    for c in pc.iter_mut().chain(qc.iter_mut()) {
        *c /= n;
    }
    let mut sc = 0.0;
    let mut sa = 0.0;
    for &(pi, qi) in pairs {
        let p = model[pi as usize];
        let q = target[qi as usize];
        let px = p.x - pc[0];
        let py = p.y - pc[1];
        let qx = q.x - qc[0];
        let qy = q.y - qc[1];
        sc += px * qx + py * qy;
        sa += px * qy - py * qx;
    }
    let yaw = if sc == 0.0 && sa == 0.0 {
        prev_yaw
    } else {
        sa.atan2(sc)
    };
    let (s, c) = yaw.sin_cos();
    Pose4::new(
        qc[0] - (c * pc[0] - s * pc[1]),
        qc[1] - (s * pc[0] + c * pc[1]),
        qc[2] - pc[2],
        yaw,
    )
}

/// Iterative closest point constrained to translation plus yaw.
///
/// Alternates nearest-neighbor correspondence from the posed model into the
/// target (pairs beyond `max_correspondence_m` dropped) with the closed-form
/// update, until both pose deltas fall below the epsilons or the iteration
/// budget runs out. An iteration with zero correspondences aborts with an
/// infinite score.
pub fn icp_4dof(
    model: &PointCloud,
    target: &PointCloud,
    init: &Pose4,
    cfg: &IcpConfig,
) -> Result<IcpOutcome> {
    if model.is_empty() {
        return Err(Error::EmptyCloud("model"));
    }
    if target.is_empty() {
        return Err(Error::EmptyTargetCloud);
    }
    cfg.validate()?;
    let index = NearestNeighborIndex::build(target)?;
    Ok(icp_with_index(model, target, &index, init, cfg))
}

fn icp_with_index(
    model: &PointCloud,
    target: &PointCloud,
    index: &NearestNeighborIndex,
    init: &Pose4,
    cfg: &IcpConfig,
) -> IcpOutcome {
    let max_d2 = cfg.max_correspondence_m * cfg.max_correspondence_m;

    let mut pose = Pose4::new(init.tx, init.ty, init.tz, init.yaw);
    let mut converged = false;
    let mut updates = 0u32;
    let mut trace = Vec::new();
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(model.len());
    // Correspondences move little between iterations; the previous match
    // seeds the search bound.
    let mut hints: Vec<u32> = vec![u32::MAX; model.len()];

    loop {
        pairs.clear();
        let mut sum = 0.0;
        for (i, p) in model.iter().enumerate() {
            let q = pose.apply(p);
            let hint = match hints[i] {
                u32::MAX => None,
                h => Some(h as usize),
            };
            let (j, d) = index.nearest_with_hint(&q, hint);
            hints[i] = j as u32;
            let d2 = d * d;
            sum += d2;
            if d2 <= max_d2 {
                pairs.push((i as u32, j as u32));
            }
        }
        trace.push(sum / model.len() as f64);

        if converged || updates >= cfg.max_iterations {
            break;
        }
        if pairs.is_empty() {
            return IcpOutcome {
                pose,
                score: f64::INFINITY,
                converged: false,
                iterations_used: updates,
                score_trace: trace,
            };
        }

        let new_pose = solve_pairs(&model.points, &target.points, &pairs, pose.yaw);
        let dt = ((new_pose.tx - pose.tx).powi(2)
            + (new_pose.ty - pose.ty).powi(2)
            + (new_pose.tz - pose.tz).powi(2))
        .sqrt();
        let dyaw = wrap_angle(new_pose.yaw - pose.yaw).abs();
        pose = new_pose;
        updates += 1;
        if dt < cfg.convergence_eps_m && dyaw < cfg.convergence_eps_rad {
            converged = true;
        }
    }

    IcpOutcome {
        pose,
        score: *trace.last().expect("at least one pass"),
        converged,
        iterations_used: updates,
        score_trace: trace,
    }
}

/// Run ICP per cluster from every yaw seed and keep the minimum-score
/// result; ties resolve by (cluster index, seed index). Each seed starts
/// from the given yaw with the model centroid aligned onto the cluster
/// centroid.
pub fn match_clusters(
    model: &PointCloud,
    cloud: &PointCloud,
    clusters: &ClusterSet,
    cfg: &IcpConfig,
) -> Result<MatchResult> {
    if clusters.clusters.is_empty() {
        return Err(Error::NothingToMatch);
    }
    if model.is_empty() {
        return Err(Error::EmptyCloud("model"));
    }
    let model_centroid = model.centroid().expect("non-empty model");

    cfg.validate()?;
    let mut best: Option<(f64, usize, usize, IcpOutcome)> = None;
    for (ci, members) in clusters.clusters.iter().enumerate() {
        let target = cluster_cloud(cloud, members);
        if target.is_empty() {
            continue;
        }
        let index = NearestNeighborIndex::build(&target)?;
        let target_centroid = target.centroid().expect("non-empty cluster");
        for (si, &seed) in cfg.yaw_seeds_rad.iter().enumerate() {
            let rot = Pose4::new(0.0, 0.0, 0.0, seed);
            let rc = rot.apply(&model_centroid);
            let init = Pose4::new(
                target_centroid.x - rc.x,
                target_centroid.y - rc.y,
                target_centroid.z - rc.z,
                seed,
            );
            let outcome = icp_with_index(model, &target, &index, &init, cfg);
            let better = match &best {
                None => true,
                Some((bs, bc, bsi, _)) => match outcome.score.partial_cmp(bs) {
                    Some(std::cmp::Ordering::Less) => true,
                    Some(std::cmp::Ordering::Equal) => (ci, si) < (*bc, *bsi),
                    _ => false,
                },
            };
            if better {
                best = Some((outcome.score, ci, si, outcome));
            }
        }
    }
    let (score, cluster_index, _, outcome) = best.ok_or(Error::NothingToMatch)?;
    Ok(MatchResult {
        cluster_index,
        score,
        pose: outcome.pose,
        converged: outcome.converged,
        iterations: outcome.iterations_used,
    })
}

/// A match is satisfactory when ICP converged and the score is under the
/// threshold (default 1.0 m^2).
pub fn is_satisfactory(result: &MatchResult, threshold_m2: f64) -> bool {
    result.converged && result.score < threshold_m2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TurbineParams;
    use crate::model::{generate_turbine_model, SamplingSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> PointCloud {
        let params = TurbineParams::default().canonical();
        let spec = SamplingSpec {
            surface_density_per_m2: 0.4,
            rng_seed: 5,
        };
        generate_turbine_model(&params, &spec).unwrap()
    }

    fn loose_cfg() -> IcpConfig {
        IcpConfig {
            max_correspondence_m: 1e9,
            ..IcpConfig::default()
        }
    }

    #[test]
    fn self_match_converges_immediately() {
        let model = small_model();
        let out = icp_4dof(&model, &model, &Pose4::identity(), &IcpConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations_used <= 5);
        assert!(out.score < 1e-9);
        assert!(out.pose.tx.abs() < 1e-6 && out.pose.ty.abs() < 1e-6 && out.pose.tz.abs() < 1e-6);
        assert!(out.pose.yaw.abs() < 1e-6);
    }

    #[test]
    fn recovers_known_transform() {
        let model = small_model();
        let truth = Pose4::new(2.0, 1.0, 0.0, 0.3);
        let target = model.transformed(&truth);
        let out = icp_4dof(&model, &target, &Pose4::identity(), &loose_cfg()).unwrap();
        assert!(out.converged);
        assert!((out.pose.tx - truth.tx).abs() < 1e-3);
        assert!((out.pose.ty - truth.ty).abs() < 1e-3);
        assert!((out.pose.tz - truth.tz).abs() < 1e-3);
        assert!(wrap_angle(out.pose.yaw - truth.yaw).abs() < 1e-3);
    }

    #[test]
    fn roll_perturbation_cannot_be_absorbed() {
        // Roll the target out of the model's reachable family: the residual
        // must stay positive and the pose by construction has no roll.
        let model = small_model();
        let roll = 0.3f64;
        let (s, c) = roll.sin_cos();
        let rolled: Vec<Point3> = model
            .iter()
            .map(|p| Point3::new(p.x, c * p.y - s * p.z, s * p.y + c * p.z))
            .collect();
        let target = PointCloud::from_points("rolled", rolled);
        let out = icp_4dof(&model, &target, &Pose4::identity(), &loose_cfg()).unwrap();
        assert!(out.score > 1e-3);
    }

    #[test]
    fn zero_correspondences_returns_infinite_score() {
        let model = small_model();
        let far: Vec<Point3> = model
            .iter()
            .map(|p| Point3::new(p.x + 1e6, p.y, p.z))
            .collect();
        let target = PointCloud::from_points("far", far);
        let out = icp_4dof(&model, &target, &Pose4::identity(), &IcpConfig::default()).unwrap();
        assert!(!out.converged);
        assert!(out.score.is_infinite());
    }

    #[test]
    fn empty_inputs_error() {
        let model = small_model();
        let empty = PointCloud::new("e");
        assert!(icp_4dof(&empty, &model, &Pose4::identity(), &IcpConfig::default()).is_err());
        assert!(icp_4dof(&model, &empty, &Pose4::identity(), &IcpConfig::default()).is_err());
        assert!(match_score(&empty, &model, &Pose4::identity()).is_err());
        assert!(match_score(&model, &empty, &Pose4::identity()).is_err());
    }

    #[test]
    fn score_zero_on_perfect_overlap() {
        let model = small_model();
        let s = match_score(&model, &model, &Pose4::identity()).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn score_of_uniform_offset_against_dense_plane() {
        // Model points 1 m off a dense planar target along its normal score
        // about 1.0 m^2.
        let mut target_pts = Vec::new();
        let step = 0.05;
        let mut x = -10.0;
        while x <= 10.0 {
            let mut y = -10.0;
            while y <= 10.0 {
                target_pts.push(Point3::new(x, y, 0.0));
                y += step;
            }
            x += step;
        }
        let target = PointCloud::from_points("plane", target_pts);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model_pts: Vec<Point3> = (0..500)
            .map(|_| Point3::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), 1.0))
            .collect();
        let model = PointCloud::from_points("offset", model_pts);
        let s = match_score(&model, &target, &Pose4::identity()).unwrap();
        assert!((s - 1.0).abs() < 0.01, "score {s}");
    }

    #[test]
    fn score_trace_is_monotone_without_trimming() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for run in 0..50 {
            let model_pts: Vec<Point3> = (0..200)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(-10.0..10.0),
                        rng.gen_range(-10.0..10.0),
                        rng.gen_range(-3.0..3.0),
                    )
                })
                .collect();
            let model = PointCloud::from_points("m", model_pts);
            let truth = Pose4::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.6..0.6),
            );
            let mut target = model.transformed(&truth);
            // Jitter the target so the problem is not exactly solvable.
            for p in &mut target.points {
                p.x += rng.gen_range(-0.05..0.05);
                p.y += rng.gen_range(-0.05..0.05);
                p.z += rng.gen_range(-0.05..0.05);
            }
            let out = icp_4dof(&model, &target, &Pose4::identity(), &loose_cfg()).unwrap();
            for w in out.score_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9,
                    "run {run}: score rose from {} to {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn yaw_seed_symmetry_recovers_exact_yaw_with_pillar() {
        // The pillar offset breaks the disc's front/back symmetry, so the
        // best seed lands on the true yaw rather than its pi-rotation.
        let model = small_model();
        for truth_yaw in [0.4, 1.73, -2.0] {
            let truth = Pose4::new(5.0, -3.0, 0.0, truth_yaw);
            let target = model.transformed(&truth);
            let set = ClusterSet {
                clusters: vec![(0..target.len()).collect()],
                linkage_radius_m: 2.0,
                min_cluster_size: 1,
            };
            let cfg = IcpConfig {
                max_correspondence_m: 1e9,
                ..IcpConfig::default()
            };
            let best = match_clusters(&model, &target, &set, &cfg).unwrap();
            assert!(best.score < 1e-6);
            assert!(
                wrap_angle(best.pose.yaw - truth_yaw).abs() < 1e-3,
                "yaw {} vs truth {truth_yaw}",
                best.pose.yaw
            );
        }
    }

    #[test]
    fn match_clusters_prefers_the_turbine_over_a_decoy_blob() {
        let model = small_model();
        let truth = Pose4::new(10.0, 4.0, 0.0, 0.9);
        let turbine_pts = model.transformed(&truth);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let blob: Vec<Point3> = (0..200)
            .map(|_| {
                Point3::new(
                    60.0 + rng.gen_range(-2.0..2.0),
                    -40.0 + rng.gen_range(-2.0..2.0),
                    1.5 + rng.gen_range(-1.5..1.5),
                )
            })
            .collect();
        let mut all = turbine_pts.points.clone();
        all.extend_from_slice(&blob);
        let cloud = PointCloud::from_points("scene", all);
        let set = ClusterSet {
            clusters: vec![
                (0..turbine_pts.len()).collect(),
                (turbine_pts.len()..cloud.len()).collect(),
            ],
            linkage_radius_m: 2.0,
            min_cluster_size: 1,
        };
        let best = match_clusters(&model, &cloud, &set, &IcpConfig::default()).unwrap();
        assert_eq!(best.cluster_index, 0);

        // And the decoy on its own scores strictly worse.
        let turbine_score = best.score;
        let decoy_only = ClusterSet {
            clusters: vec![(turbine_pts.len()..cloud.len()).collect()],
            linkage_radius_m: 2.0,
            min_cluster_size: 1,
        };
        let decoy = match_clusters(&model, &cloud, &decoy_only, &IcpConfig::default()).unwrap();
        assert!(decoy.score > turbine_score);
    }

    #[test]
    fn no_clusters_errors() {
        let model = small_model();
        let set = ClusterSet {
            clusters: vec![],
            linkage_radius_m: 2.0,
            min_cluster_size: 1,
        };
        assert!(matches!(
            match_clusters(&model, &model, &set, &IcpConfig::default()),
            Err(Error::NothingToMatch)
        ));
    }

    #[test]
    fn satisfactory_requires_convergence_and_low_score() {
        let good = MatchResult {
            cluster_index: 0,
            score: 0.26,
            pose: Pose4::identity(),
            converged: true,
            iterations: 10,
        };
        assert!(is_satisfactory(&good, 1.0));
        let unconverged = MatchResult {
            converged: false,
            ..good.clone()
        };
        assert!(!is_satisfactory(&unconverged, 1.0));
        let unrelated = MatchResult {
            score: 150.0,
            ..good
        };
        assert!(!is_satisfactory(&unrelated, 1.0));
    }
}
