//! Surface meshes and the synthetic nested-ellipsoid geometry.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use crate::{rng, Error, Result};

pub type Point = [f64; 3];

/// Smallest node count accepted for either surface.
pub const MIN_NODES: usize = 8;
/// Minimum clearance between any source node and any sensor node.
pub const MIN_CLEARANCE_MM: f64 = 10.0;
/// Neighbours per node before symmetrisation.
const KNN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceTag {
    Source,
    Sensor,
}

/// Point cloud on a closed surface with an undirected neighbour graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    nodes: Vec<Point>,
    // sorted, symmetric, irreflexive
    adjacency: Vec<Vec<usize>>,
    tag: SurfaceTag,
}

impl SurfaceMesh {
    /// Builds a mesh from nodes and an undirected edge list, checking every
    /// mesh invariant.
    pub fn new(nodes: Vec<Point>, edges: &[(usize, usize)], tag: SurfaceTag) -> Result<Self> {
        if nodes.len() < MIN_NODES {
            return Err(Error::BelowMinimum("mesh node count"));
        }
        if nodes.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mesh coordinates"));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::param("edges", alloc::format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::param("edges", alloc::format!("self loop at {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let mesh = SurfaceMesh { nodes, adjacency, tag };
        if !mesh.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(mesh)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn tag(&self) -> SurfaceTag {
        self.tag
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Undirected edges with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn centroid(&self) -> Point {
        let n = self.nodes.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.nodes {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    /// Hop distance from `start` to every node (`None` when unreachable).
    pub fn bfs_distances(&self, start: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(a) = queue.pop_front() {
            let d = dist[a].unwrap_or(0);
            for &b in &self.adjacency[a] {
                if dist[b].is_none() {
                    dist[b] = Some(d + 1);
                    queue.push_back(b);
                }
            }
        }
        dist
    }

    /// Nodes in breadth-first order from `start`.
    pub fn bfs_order(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(a) = queue.pop_front() {
            order.push(a);
            for &b in &self.adjacency[a] {
                if !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        order
    }

    pub fn is_connected(&self) -> bool {
        self.nodes.is_empty() || self.bfs_order(0).len() == self.nodes.len()
    }

    /// Same connectivity, nodes moved through `f`.
    pub fn map_nodes(&self, f: impl Fn(Point) -> Point) -> Self {
        SurfaceMesh {
            nodes: self.nodes.iter().map(|&p| f(p)).collect(),
            adjacency: self.adjacency.clone(),
            tag: self.tag,
        }
    }

    /// Largest Euclidean distance between two nodes.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                best = best.max(distance(*a, *b));
            }
        }
        best
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    libm::sqrt(dx * dx + dy * dy + dz * dz)
}

/// Semi-axes (mm) of the two nested ellipsoids, both centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    pub source_axes: [f64; 3],
    pub sensor_axes: [f64; 3],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        // Sized so that every admissible error transform keeps the heart
        // inside the smallest admissible torso.
        GeometryConfig {
            source_axes: [50.0, 35.0, 25.0],
            sensor_axes: [125.0, 125.0, 140.0],
        }
    }
}

/// Heart (source) and torso (sensor) surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub source: SurfaceMesh,
    pub sensor: SurfaceMesh,
    /// Semi-axes of the sensor ellipsoid, used for containment checks.
    pub sensor_axes: [f64; 3],
}

/// Default nested-ellipsoid geometry.
pub fn make_base_geometry(n_source: usize, n_sensor: usize, seed: u64) -> Result<Geometry> {
    make_geometry(&GeometryConfig::default(), n_source, n_sensor, seed)
}

pub fn make_geometry(cfg: &GeometryConfig, n_source: usize, n_sensor: usize, seed: u64) -> Result<Geometry> {
    if n_source < MIN_NODES {
        return Err(Error::BelowMinimum("n_source"));
    }
    if n_sensor < MIN_NODES {
        return Err(Error::BelowMinimum("n_sensor"));
    }
    for axes in [cfg.source_axes, cfg.sensor_axes] {
        if axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::param("axes", "semi-axes must be positive and finite"));
        }
    }
    let mut rng = rng::stream(seed, 0);
    let source_phase = rng.random_range(0.0..2.0 * PI);
    let sensor_phase = rng.random_range(0.0..2.0 * PI);
    let source = ellipsoid_mesh(n_source, cfg.source_axes, source_phase, SurfaceTag::Source)?;
    let sensor = ellipsoid_mesh(n_sensor, cfg.sensor_axes, sensor_phase, SurfaceTag::Sensor)?;
    check_nested(&source, &sensor, cfg.sensor_axes, MIN_CLEARANCE_MM)?;
    Ok(Geometry {
        source,
        sensor,
        sensor_axes: cfg.sensor_axes,
    })
}

/// Fibonacci lattice on an ellipsoid with symmetrised k-nearest-neighbour
/// connectivity.
fn ellipsoid_mesh(n: usize, axes: [f64; 3], phase: f64, tag: SurfaceTag) -> Result<SurfaceMesh> {
    let golden = PI * (3.0 - libm::sqrt(5.0));
    let nodes: Vec<Point> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = libm::sqrt((1.0 - z * z).max(0.0));
            let theta = golden * i as f64 + phase;
            [axes[0] * r * libm::cos(theta), axes[1] * r * libm::sin(theta), axes[2] * z]
        })
        .collect();
    // neighbourhoods are taken on the unit sphere so that elongated
    // ellipsoids still get an isotropic graph
    let unit: Vec<Point> = nodes.iter().map(|p| [p[0] / axes[0], p[1] / axes[1], p[2] / axes[2]]).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| distance(unit[i], unit[a]).total_cmp(&distance(unit[i], unit[b])).then(a.cmp(&b)));
        edges.extend(order.into_iter().take(KNN).map(|j| (i, j)));
    }
    connect_components(&unit, &mut edges);
    SurfaceMesh::new(nodes, &edges, tag)
}

/// Joins connected components through their closest node pairs until the
/// graph is connected.
fn connect_components(points: &[Point], edges: &mut Vec<(usize, usize)>) {
    loop {
        let n = points.len();
        let mut label = vec![usize::MAX; n];
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges.iter() {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut count = 0;
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            label[s] = count;
            while let Some(a) = stack.pop() {
                for &b in &adjacency[a] {
                    if label[b] == usize::MAX {
                        label[b] = count;
                        stack.push(b);
                    }
                }
            }
            count += 1;
        }
        if count <= 1 {
            return;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            for b in 0..n {
                if label[a] == 0 && label[b] != 0 {
                    let d = distance(points[a], points[b]);
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
        }
        edges.push((best.1, best.2));
    }
}

/// Checks that every source node lies strictly inside the sensor ellipsoid
/// (semi-axes `sensor_axes` about the sensor centroid) and at least
/// `clearance` from every sensor node.
pub fn check_nested(source: &SurfaceMesh, sensor: &SurfaceMesh, sensor_axes: [f64; 3], clearance: f64) -> Result<()> {
    let c = sensor.centroid();
    for (i, p) in source.nodes().iter().enumerate() {
        let q: f64 = (0..3).map(|k| libm::pow((p[k] - c[k]) / sensor_axes[k], 2.0)).sum();
        if q >= 1.0 {
            return Err(Error::SurfacesIntersect(alloc::format!("source node {i} lies outside the sensor surface")));
        }
    }
    let min = min_distance(source, sensor);
    if min < clearance {
        return Err(Error::SurfacesIntersect(alloc::format!(
            "minimum source-sensor distance {min:.3} mm is below {clearance} mm"
        )));
    }
    Ok(())
}

pub fn min_distance(a: &SurfaceMesh, b: &SurfaceMesh) -> f64 {
    a.nodes()
        .iter()
        .flat_map(|p| b.nodes().iter().map(move |q| distance(*p, *q)))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_is_deterministic() {
        let a = make_base_geometry(8, 8, 0).unwrap();
        let b = make_base_geometry(8, 8, 0).unwrap();
        assert_eq!(a, b);
        let bits = |g: &Geometry| g.source.nodes().iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn clearance_holds_on_every_pair() {
        let g = make_base_geometry(64, 96, 1).unwrap();
        for p in g.source.nodes() {
            for q in g.sensor.nodes() {
                assert!(distance(*p, *q) >= MIN_CLEARANCE_MM);
            }
        }
    }

    #[test]
    fn rejects_small_counts() {
        assert_eq!(make_base_geometry(4, 8, 3), Err(Error::BelowMinimum("n_source")));
        assert_eq!(make_base_geometry(8, 7, 3), Err(Error::BelowMinimum("n_sensor")));
    }

    #[test]
    fn rejects_intersecting_surfaces() {
        let cfg = GeometryConfig {
            source_axes: [100.0, 100.0, 100.0],
            sensor_axes: [90.0, 90.0, 90.0],
        };
        assert!(matches!(make_geometry(&cfg, 16, 16, 0), Err(Error::SurfacesIntersect(_))));
    }

    #[test]
    fn meshes_are_connected_and_symmetric() {
        for seed in 0..5 {
            let g = make_base_geometry(64, 96, seed).unwrap();
            for mesh in [&g.source, &g.sensor] {
                assert!(mesh.is_connected());
                for i in 0..mesh.len() {
                    assert!(!mesh.neighbors(i).contains(&i));
                    for &j in mesh.neighbors(i) {
                        assert!(mesh.neighbors(j).contains(&i));
                    }
                }
            }
        }
    }

    #[test]
    fn disconnected_mesh_is_rejected() {
        let nodes: Vec<Point> = (0..8).map(|i| [i as f64, 0.0, 0.0]).collect();
        let edges = [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)];
        assert_eq!(SurfaceMesh::new(nodes, &edges, SurfaceTag::Source), Err(Error::Disconnected));
    }
}
