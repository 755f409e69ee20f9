//! Nearest-neighbor queries over point clouds.
//!
//! `nearest_neighbor` is the defining exhaustive scan; `NearestNeighborIndex`
//! is a kd-tree for repeated queries (the ICP and clustering inner loops)
//! and must return exactly the scan's answer, ties broken by lowest index.

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Exhaustive linear scan. Returns (index, distance); ties go to the lowest
/// index. Errors on an empty target.
pub fn nearest_neighbor(query: &Point3, target: &PointCloud) -> Result<(usize, f64)> {
    if target.is_empty() {
        return Err(Error::EmptyTargetCloud);
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in target.iter().enumerate() {
        let d2 = query.distance_squared(p);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    Ok((best.0, best.1.sqrt()))
}

const LEAF_SIZE: usize = 16;

enum Node {
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        start: usize,
        end: usize,
    },
}

/// Median-split kd-tree over a fixed cloud. Queries are exact and
/// deterministic: equal distances resolve to the lowest point index, and a
/// subtree is only pruned when it is strictly farther than the current best.
pub struct NearestNeighborIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl NearestNeighborIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyTargetCloud);
        }
        let points = cloud.points.clone();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = build_node(&points, &mut order, 0, points.len(), &mut nodes);
        Ok(Self {
            points,
            order,
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Point3 {
        &self.points[i]
    }

    /// Exact nearest neighbor: (index, distance), ties to lowest index.
    pub fn nearest(&self, query: &Point3) -> (usize, f64) {
        self.nearest_with_hint(query, None)
    }

    /// Same as `nearest`, seeded with a candidate index (for example last
    /// iteration's correspondence). The hint only tightens the search bound;
    /// the result is identical to `nearest`.
    pub fn nearest_with_hint(&self, query: &Point3, hint: Option<usize>) -> (usize, f64) {
        let mut best = match hint {
            Some(i) if i < self.points.len() => (query.distance_squared(&self.points[i]), i),
            _ => (f64::INFINITY, usize::MAX),
        };
        self.search(self.root, query, &mut best);
        debug_assert!(best.1 != usize::MAX);
        (best.1, best.0.sqrt())
    }

    fn search(&self, node: usize, query: &Point3, best: &mut (f64, usize)) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d2 = query.distance_squared(&self.points[i as usize]);
                    if d2 < best.0 || (d2 == best.0 && (i as usize) < best.1) {
                        *best = (d2, i as usize);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let q = coord(query, *axis);
                let delta = q - value;
                let (near, far) = if delta < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, best);
                // Equal plane distance may still hide an equal-distance,
                // lower-index point.
                if delta * delta <= best.0 {
                    self.search(far, query, best);
                }
            }
        }
    }

    /// Indices of all points within `radius` (inclusive) of the query,
    /// ascending.
    pub fn neighbors_within(&self, query: &Point3, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        self.collect_within(self.root, query, radius, radius * radius, out);
        out.sort_unstable();
    }

    fn collect_within(
        &self,
        node: usize,
        query: &Point3,
        radius: f64,
        r2: f64,
        out: &mut Vec<usize>,
    ) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if query.distance_squared(&self.points[i as usize]) <= r2 {
                        out.push(i as usize);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                // Left holds coords <= value, right >= value; the radius is
                // inclusive on both sides.
                let delta = coord(query, *axis) - value;
                if delta <= radius {
                    self.collect_within(*left, query, radius, r2, out);
                }
                if -delta <= radius {
                    self.collect_within(*right, query, radius, r2, out);
                }
            }
        }
    }
}

fn coord(p: &Point3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn build_node(
    points: &[Point3],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let len = end - start;
    if len <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }

    // Split the widest axis of this range's bounding box.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &order[start..end] {
        let p = &points[i as usize];
        for a in 0..3 {
            let c = coord(p, a);
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }

    let mid = len / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| {
        coord(&points[a as usize], axis)
            .partial_cmp(&coord(&points[b as usize], axis))
            .unwrap()
            .then(a.cmp(&b))
    });
    let value = coord(&points[order[start + mid] as usize], axis);

    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes.push(Node::Split {
        axis,
        value,
        left,
        right,
    });
    nodes.len() - 1
}
