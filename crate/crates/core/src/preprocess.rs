//! Front half of the matching chain: fold scans into a global cloud,
//! voxel-downsample, reject the ground plane, and cluster by proximity.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::sim::ScanFrame;
use crate::spatial::NearestNeighborIndex;

/// Transform a frame into the world by its sensor pose and append it to the
/// global cloud.
pub fn register_frame(global: &PointCloud, frame: &ScanFrame) -> PointCloud {
    let mut out = global.clone();
    append_frame(&mut out, frame);
    out
}

/// In-place variant of `register_frame` for the accumulation loop.
pub fn append_frame(global: &mut PointCloud, frame: &ScanFrame) {
    global
        .points
        .extend(frame.cloud.iter().map(|p| frame.sensor_pose.apply(p)));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoxelSpec {
    pub voxel_size_m: f64,
}

impl Default for VoxelSpec {
    fn default() -> Self {
        Self { voxel_size_m: 0.5 }
    }
}

impl VoxelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size_m.is_finite() && self.voxel_size_m > 0.0) {
            return Err(Error::InvalidConfig("voxel.voxel_size_m must be > 0".into()));
        }
        Ok(())
    }
}

/// Downsample to one centroid per occupied grid cell. Cells are half-open
/// boxes `[k*s, (k+1)*s)` anchored at the world origin; output cells are
/// ordered by cell index, centroids accumulate in input order.
pub fn voxelize(cloud: &PointCloud, spec: &VoxelSpec) -> PointCloud {
    let s = spec.voxel_size_m;
    assert!(s > 0.0, "voxel size must be positive");
    let mut cells: HashMap<(i64, i64, i64), (f64, f64, f64, u64)> = HashMap::new();
    for p in cloud.iter() {
        let key = (
            (p.x / s).floor() as i64,
            (p.y / s).floor() as i64,
            (p.z / s).floor() as i64,
        );
        let e = cells.entry(key).or_insert((0.0, 0.0, 0.0, 0));
        e.0 += p.x;
        e.1 += p.y;
        e.2 += p.z;
        e.3 += 1;
    }
    let mut keys: Vec<(i64, i64, i64)> = cells.keys().copied().collect();
    keys.sort_unstable();
    let points = keys
        .iter()
        .map(|k| {
            let (sx, sy, sz, n) = cells[k];
            let n = n as f64;
            Point3::new(sx / n, sy / n, sz / n)
        })
        .collect();
    PointCloud::from_points(cloud.frame_id.clone(), points)
}

/// Plane `normal . p = d` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub d: f64,
    pub inlier_threshold_m: f64,
}

impl PlaneModel {
    pub fn distance_to(&self, p: &Point3) -> f64 {
        (self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z - self.d).abs()
    }
}

/// Outcome of ground rejection. `plane` is None when no near-horizontal
/// plane was found, in which case `survivors` is the unchanged input.
#[derive(Debug, Clone)]
pub struct GroundRejection {
    pub survivors: PointCloud,
    pub plane: Option<PlaneModel>,
}

// Candidate planes are scored on at most this many points; the final inlier
// removal always runs on the full cloud.
const RANSAC_SCORE_SAMPLE: usize = 30_000;

/// RANSAC over point triplets: the plane with the most inliers within
/// `threshold_m`, subject to its normal lying within `max_tilt_deg` of
/// vertical. Deterministic per seed.
pub fn reject_ground(
    cloud: &PointCloud,
    threshold_m: f64,
    max_tilt_deg: f64,
    iterations: u32,
    seed: u64,
) -> Result<GroundRejection> {
    if cloud.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: cloud.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cloud.len();
    let min_nz = max_tilt_deg.to_radians().cos();

    // Score on a subsample when the cloud is large.
    let score_idx: Vec<usize> = if n > RANSAC_SCORE_SAMPLE {
        let mut idx: Vec<usize> = Vec::with_capacity(RANSAC_SCORE_SAMPLE);
        for _ in 0..RANSAC_SCORE_SAMPLE {
            idx.push(rng.gen_range(0..n));
        }
        idx
    } else {
        (0..n).collect()
    };

    let mut best: Option<(usize, [f64; 3], f64)> = None;
    for _ in 0..iterations {
        let (i, j, k) = loop {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            let k = rng.gen_range(0..n);
            if i != j && j != k && i != k {
                break (i, j, k);
            }
        };
        let p1 = cloud.points[i];
        let p2 = cloud.points[j];
        let p3 = cloud.points[k];
        let u = [p2.x - p1.x, p2.y - p1.y, p2.z - p1.z];
        let v = [p3.x - p1.x, p3.y - p1.y, p3.z - p1.z];
        let mut normal = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let len = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
        if len < 1e-12 {
            continue;
        }
        for c in &mut normal {
            *c /= len;
        }
        // Orient upward; the tilt constraint is against +z.
        if normal[2] < 0.0 {
            for c in &mut normal {
                *c = -*c;
            }
        }
        if normal[2] < min_nz {
            continue;
        }
        let d = normal[0] * p1.x + normal[1] * p1.y + normal[2] * p1.z;
        let mut inliers = 0usize;
        for &si in &score_idx {
            let p = &cloud.points[si];
            let dist = (normal[0] * p.x + normal[1] * p.y + normal[2] * p.z - d).abs();
            if dist <= threshold_m {
                inliers += 1;
            }
        }
        if best.map_or(true, |(bc, _, _)| inliers > bc) {
            best = Some((inliers, normal, d));
        }
    }

    let Some((_, normal, d)) = best else {
        return Ok(GroundRejection {
            survivors: cloud.clone(),
            plane: None,
        });
    };

    let plane = PlaneModel {
        normal,
        d,
        inlier_threshold_m: threshold_m,
    };
    let survivors: Vec<Point3> = cloud
        .iter()
        .filter(|p| plane.distance_to(p) > threshold_m)
        .copied()
        .collect();
    Ok(GroundRejection {
        survivors: PointCloud::from_points(cloud.frame_id.clone(), survivors),
        plane: Some(plane),
    })
}

/// Connected components under a linkage radius, indices into the source
/// cloud. Components smaller than `min_cluster_size` are discarded; clusters
/// are ordered by size descending, ties by smallest member index; members
/// ascend.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<usize>>,
    pub linkage_radius_m: f64,
    pub min_cluster_size: usize,
}

/// Euclidean clustering by breadth-first expansion over the linkage graph.
pub fn cluster(cloud: &PointCloud, linkage_radius_m: f64, min_cluster_size: usize) -> ClusterSet {
    assert!(linkage_radius_m > 0.0, "linkage radius must be positive");
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    if !cloud.is_empty() {
        let index = NearestNeighborIndex::build(cloud).expect("non-empty cloud");
        let mut visited = vec![false; cloud.len()];
        let mut neighbors = Vec::new();
        for start in 0..cloud.len() {
            if visited[start] {
                continue;
            }
            visited[start] = true;
            let mut component = vec![start];
            let mut cursor = 0;
            while cursor < component.len() {
                let current = component[cursor];
                cursor += 1;
                index.neighbors_within(&cloud.points[current], linkage_radius_m, &mut neighbors);
                for &nb in &neighbors {
                    if !visited[nb] {
                        visited[nb] = true;
                        component.push(nb);
                    }
                }
            }
            if component.len() >= min_cluster_size {
                component.sort_unstable();
                clusters.push(component);
            }
        }
        clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    }
    ClusterSet {
        clusters,
        linkage_radius_m,
        min_cluster_size,
    }
}

/// Extract one cluster as its own cloud.
pub fn cluster_cloud(cloud: &PointCloud, members: &[usize]) -> PointCloud {
    PointCloud::from_points(
        cloud.frame_id.clone(),
        members.iter().map(|&i| cloud.points[i]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose4;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn random_cloud(n: usize, seed: u64, extent: f64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-extent..extent),
                    rng.gen_range(-extent..extent),
                    rng.gen_range(-extent..extent),
                )
            })
            .collect();
        PointCloud::from_points("test", points)
    }

    fn frame_of(points: Vec<Point3>, pose: Pose4) -> ScanFrame {
        ScanFrame {
            cloud: PointCloud::from_points("sensor", points),
            sensor_pose: pose,
            timestamp_s: 0.0,
        }
    }

    #[test]
    fn register_appends_into_empty_global() {
        let global = PointCloud::new("world");
        let frame = frame_of(
            vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)],
            Pose4::identity(),
        );
        let out = register_frame(&global, &frame);
        assert_eq!(out.len(), 2);
        assert_eq!(out.points, frame.cloud.points);
    }

    #[test]
    fn register_counts_add_up() {
        let global = PointCloud::from_points("world", vec![Point3::new(0.0, 0.0, 0.0)]);
        let frame = frame_of(vec![Point3::new(1.0, 1.0, 1.0); 5], Pose4::identity());
        let out = register_frame(&global, &frame);
        assert_eq!(out.len(), global.len() + frame.cloud.len());
    }

    #[test]
    fn register_applies_the_sensor_pose() {
        // Hand transform: (1,0,0) rotated by pi then shifted +1 in x lands
        // at the origin.
        let global = PointCloud::new("world");
        let frame = frame_of(
            vec![Point3::new(1.0, 0.0, 0.0)],
            Pose4::new(1.0, 0.0, 0.0, std::f64::consts::PI),
        );
        let out = register_frame(&global, &frame);
        let p = out.points[0];
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z.abs() < 1e-12);
    }

    #[test]
    fn voxelize_empty_is_empty() {
        let out = voxelize(&PointCloud::new("e"), &VoxelSpec::default());
        assert!(out.is_empty());
    }

    #[test]
    fn voxelize_collapses_one_cell_to_centroid() {
        let pts: Vec<Point3> = (0..8)
            .map(|i| Point3::new(0.05 * i as f64, 0.01 * i as f64, 0.3))
            .collect();
        let cloud = PointCloud::from_points("t", pts.clone());
        let out = voxelize(&cloud, &VoxelSpec { voxel_size_m: 0.5 });
        assert_eq!(out.len(), 1);
        let cx: f64 = pts.iter().map(|p| p.x).sum::<f64>() / 8.0;
        assert!((out.points[0].x - cx).abs() < 1e-12);
    }

    #[test]
    fn voxelize_matches_brute_force_grid() {
        // Oracle: hash by floor(p/size) into a BTreeMap, accumulate in input
        // order, compare exactly.
        let cloud = random_cloud(10_000, 21, 40.0);
        let s = 0.5;
        let out = voxelize(&cloud, &VoxelSpec { voxel_size_m: s });

        let mut oracle: BTreeMap<(i64, i64, i64), (f64, f64, f64, u64)> = BTreeMap::new();
        for p in cloud.iter() {
            let key = (
                (p.x / s).floor() as i64,
                (p.y / s).floor() as i64,
                (p.z / s).floor() as i64,
            );
            let e = oracle.entry(key).or_insert((0.0, 0.0, 0.0, 0));
            e.0 += p.x;
            e.1 += p.y;
            e.2 += p.z;
            e.3 += 1;
        }
        let expect: Vec<Point3> = oracle
            .values()
            .map(|(sx, sy, sz, n)| Point3::new(sx / *n as f64, sy / *n as f64, sz / *n as f64))
            .collect();
        assert_eq!(out.points, expect);
    }

    #[test]
    fn voxelize_occupied_cells_are_stable() {
        let cloud = random_cloud(2000, 22, 10.0);
        let spec = VoxelSpec { voxel_size_m: 0.5 };
        let once = voxelize(&cloud, &spec);
        let twice = voxelize(&once, &spec);
        // Centroids stay within their cells, so the occupied set is stable.
        assert_eq!(once.len(), twice.len());
        let cell = |p: &Point3| {
            (
                (p.x / 0.5).floor() as i64,
                (p.y / 0.5).floor() as i64,
                (p.z / 0.5).floor() as i64,
            )
        };
        let a: Vec<_> = once.iter().map(cell).collect();
        let b: Vec<_> = twice.iter().map(cell).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn reject_ground_separates_plane_from_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut points = Vec::new();
        for _ in 0..1000 {
            points.push(Point3::new(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                0.0,
            ));
        }
        for _ in 0..100 {
            points.push(Point3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                45.0 + rng.gen_range(-1.0..1.0),
            ));
        }
        let cloud = PointCloud::from_points("t", points);
        let out = reject_ground(&cloud, 0.3, 15.0, 500, 1).unwrap();
        let plane = out.plane.expect("ground found");
        assert!(plane.normal[2] > 0.99);
        assert!(plane.d.abs() < 0.3);
        assert_eq!(out.survivors.len(), 100);
        for p in out.survivors.iter() {
            assert!(p.z > 40.0);
        }
    }

    #[test]
    fn reject_ground_respects_tilt_constraint() {
        // All points on a vertical wall: nothing qualifies as ground.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let points: Vec<Point3> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-20.0..20.0),
                    0.0,
                    rng.gen_range(0.0..30.0),
                )
            })
            .collect();
        let cloud = PointCloud::from_points("t", points);
        let out = reject_ground(&cloud, 0.3, 15.0, 500, 2).unwrap();
        assert!(out.plane.is_none());
        assert_eq!(out.survivors, cloud);
    }

    #[test]
    fn reject_ground_needs_three_points() {
        let cloud = PointCloud::from_points("t", vec![Point3::new(0.0, 0.0, 0.0); 2]);
        assert!(reject_ground(&cloud, 0.3, 15.0, 100, 1).is_err());
    }

    #[test]
    fn reject_ground_never_removes_far_points() {
        let cloud = random_cloud(2000, 32, 20.0);
        let out = reject_ground(&cloud, 0.5, 25.0, 200, 3).unwrap();
        if let Some(plane) = out.plane {
            for p in out.survivors.iter() {
                assert!(plane.distance_to(p) > 0.5);
            }
            let removed = cloud.len() - out.survivors.len();
            let inliers = cloud
                .iter()
                .filter(|p| plane.distance_to(p) <= 0.5)
                .count();
            assert_eq!(removed, inliers);
        }
    }

    #[test]
    fn reject_ground_matches_grid_search_on_noisy_plane() {
        // Oracle: exhaustive search over a coarse grid of horizontal plane
        // offsets; RANSAC's inlier count must come within 1%.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut points = Vec::new();
        for _ in 0..4000 {
            let z: f64 = rng.gen_range(-0.06..0.06);
            points.push(Point3::new(
                rng.gen_range(-40.0..40.0),
                rng.gen_range(-40.0..40.0),
                z,
            ));
        }
        for _ in 0..400 {
            points.push(Point3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(5.0..40.0),
            ));
        }
        let cloud = PointCloud::from_points("t", points);
        let threshold = 0.3;

        let mut oracle_best = 0usize;
        let mut dz = -1.0;
        while dz <= 1.0 {
            let inliers = cloud.iter().filter(|p| (p.z - dz).abs() <= threshold).count();
            oracle_best = oracle_best.max(inliers);
            dz += 0.01;
        }

        let out = reject_ground(&cloud, threshold, 15.0, 500, 4).unwrap();
        assert!(out.plane.is_some());
        let removed = cloud.len() - out.survivors.len();
        assert!(
            removed as f64 >= oracle_best as f64 * 0.99,
            "ransac {removed} vs oracle {oracle_best}"
        );
    }

    #[test]
    fn cluster_two_far_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut points = Vec::new();
        for c in [(0.0, 0.0, 0.0), (50.0, 0.0, 0.0)] {
            for _ in 0..100 {
                points.push(Point3::new(
                    c.0 + rng.gen_range(-1.0..1.0),
                    c.1 + rng.gen_range(-1.0..1.0),
                    c.2 + rng.gen_range(-1.0..1.0),
                ));
            }
        }
        let cloud = PointCloud::from_points("t", points);
        let set = cluster(&cloud, 2.0, 10);
        assert_eq!(set.clusters.len(), 2);
        assert_eq!(set.clusters[0].len(), 100);
        assert_eq!(set.clusters[1].len(), 100);
    }

    #[test]
    fn cluster_chain_connectivity() {
        let points: Vec<Point3> = (0..60).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let cloud = PointCloud::from_points("t", points);
        let set = cluster(&cloud, 2.0, 5);
        assert_eq!(set.clusters.len(), 1);
        assert_eq!(set.clusters[0].len(), 60);
    }

    #[test]
    fn cluster_matches_union_find_oracle() {
        // Oracle: union-find over all O(n^2) pairs.
        let cloud = random_cloud(500, 41, 12.0);
        let radius = 1.5;
        let min_size = 3;
        let set = cluster(&cloud, radius, min_size);

        let n = cloud.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if cloud.points[i].distance(&cloud.points[j]) <= radius {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let mut expect: Vec<Vec<usize>> = groups
            .into_values()
            .filter(|g| g.len() >= min_size)
            .collect();
        for g in &mut expect {
            g.sort_unstable();
        }
        expect.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        assert_eq!(set.clusters, expect);
    }

    #[test]
    fn cluster_output_is_a_partition() {
        let cloud = random_cloud(400, 42, 15.0);
        let set = cluster(&cloud, 2.0, 1);
        let mut seen = vec![false; cloud.len()];
        for c in &set.clusters {
            for &i in c {
                assert!(!seen[i], "point {i} in two clusters");
                seen[i] = true;
            }
        }
        // min_cluster_size 1 keeps everything.
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn pipeline_counts_are_monotone() {
        let frames: Vec<ScanFrame> = (0..3)
            .map(|k| {
                frame_of(
                    random_cloud(500, 50 + k, 20.0).points,
                    Pose4::new(0.0, 0.0, k as f64, 0.0),
                )
            })
            .collect();
        let mut global = PointCloud::new("world");
        for f in &frames {
            append_frame(&mut global, f);
        }
        let voxelized = voxelize(&global, &VoxelSpec { voxel_size_m: 0.5 });
        assert!(voxelized.len() <= global.len());
        let rejected = reject_ground(&voxelized, 0.3, 15.0, 200, 1).unwrap();
        assert!(rejected.survivors.len() <= voxelized.len());
    }
}
