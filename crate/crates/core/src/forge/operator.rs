//! The surrogate transfer operator and its error-transformed variants.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::mesh::{check_nested, distance, Geometry, Point, SurfaceMesh};
use super::spec::ErrorSpec;
use crate::{Error, Matrix, Result};

/// Source-sensor distances below this make the monopole kernel unusable.
pub const MIN_KERNEL_DISTANCE_MM: f64 = 1.0;

/// Sensor-by-source transfer matrix with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOperator {
    matrix: Matrix,
    id: u32,
    spec: Option<ErrorSpec>,
}

impl ForwardOperator {
    /// Wraps a matrix, rejecting empty, non-finite or all-zero input.
    pub fn new(matrix: Matrix, id: u32, spec: Option<ErrorSpec>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::Empty("operator matrix"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator matrix"));
        }
        if matrix.norm() <= 0.0 {
            return Err(Error::Degenerate("operator has zero Frobenius norm"));
        }
        Ok(ForwardOperator { matrix, id, spec })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn spec(&self) -> Option<&ErrorSpec> {
        self.spec.as_ref()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }
}

/// Marks the conductivity patch: the first quarter of source nodes in
/// breadth-first order from node 0. Defined on the graph, so it moves with
/// the nodes under rigid transforms.
pub fn source_patch(source: &SurfaceMesh) -> Vec<bool> {
    let size = source.len().div_ceil(4);
    let mut patch = vec![false; source.len()];
    for i in source.bfs_order(0).into_iter().take(size) {
        patch[i] = true;
    }
    patch
}

/// Unnormalised monopole transfer `(1 + c·patch(n)) / (4π d(m, n))`.
pub fn monopole_kernel(source: &SurfaceMesh, sensor: &SurfaceMesh, conductivity: f64) -> Result<Matrix> {
    if !conductivity.is_finite() {
        return Err(Error::NonFinite("conductivity"));
    }
    let patch = source_patch(source);
    let mut k = Matrix::zeros(sensor.len(), source.len());
    for (m, q) in sensor.nodes().iter().enumerate() {
        for (n, p) in source.nodes().iter().enumerate() {
            let d = distance(*p, *q);
            if d < MIN_KERNEL_DISTANCE_MM {
                return Err(Error::NearSingular {
                    source_node: n,
                    sensor_node: m,
                    distance_mm: d,
                });
            }
            let gain = if patch[n] { 1.0 + conductivity } else { 1.0 };
            k[(m, n)] = gain / (4.0 * PI * d);
        }
    }
    Ok(k)
}

/// Row-normalised monopole kernel; the result has id 0 and no spec.
pub fn mechanistic_operator(source: &SurfaceMesh, sensor: &SurfaceMesh, conductivity: f64) -> Result<ForwardOperator> {
    let mut k = monopole_kernel(source, sensor, conductivity)?;
    for mut row in k.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    ForwardOperator::new(k, 0, None)
}

fn rotation_matrix(deg: [f64; 3]) -> [[f64; 3]; 3] {
    let [ax, ay, az] = deg.map(|d| d.to_radians());
    let (sx, cx) = (libm::sin(ax), libm::cos(ax));
    let (sy, cy) = (libm::sin(ay), libm::cos(ay));
    let (sz, cz) = (libm::sin(az), libm::cos(az));
    // Rz · Ry · Rx
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// Rotates the source about its centroid then translates it.
pub fn transform_source(source: &SurfaceMesh, spec: &ErrorSpec) -> SurfaceMesh {
    let r = rotation_matrix(spec.rotation_deg());
    let c = source.centroid();
    let t = spec.translation_mm();
    source.map_nodes(|p: Point| {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        core::array::from_fn(|i| c[i] + r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2] + t[i])
    })
}

/// Scales the sensor about its centroid.
pub fn scale_sensor(sensor: &SurfaceMesh, scale: f64) -> SurfaceMesh {
    let c = sensor.centroid();
    sensor.map_nodes(|p: Point| core::array::from_fn(|i| c[i] + scale * (p[i] - c[i])))
}

/// Perturbs the base geometry by `spec` and rebuilds the operator. Fails if
/// the moved heart leaves the scaled torso.
pub fn apply_error(base: &Geometry, spec: &ErrorSpec) -> Result<ForwardOperator> {
    let source = transform_source(&base.source, spec);
    let sensor = scale_sensor(&base.sensor, spec.torso_scale());
    let axes = base.sensor_axes.map(|a| a * spec.torso_scale());
    check_nested(&source, &sensor, axes, MIN_KERNEL_DISTANCE_MM)?;
    let op = mechanistic_operator(&source, &sensor, spec.conductivity())?;
    Ok(ForwardOperator { spec: Some(*spec), ..op })
}
