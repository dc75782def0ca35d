//! Base geometry, the surrogate mechanistic operator, labelled error
//! transforms and paired datasets.

mod dataset;
mod mesh;
mod operator;
mod spec;

pub use dataset::{
    forge_dataset, stratified_class, train_count, Dataset, DatasetManifest, OperatorIndex, PairRecord,
    PairingPolicy, Split, TRAIN_FRACTION,
};
pub use mesh::{
    check_nested, distance, make_base_geometry, make_geometry, min_distance, Geometry, GeometryConfig, Point,
    SurfaceMesh, SurfaceTag, MIN_CLEARANCE_MM, MIN_NODES,
};
pub use operator::{
    apply_error, mechanistic_operator, monopole_kernel, scale_sensor, source_patch, transform_source,
    ForwardOperator, MIN_KERNEL_DISTANCE_MM,
};
pub use spec::{
    ErrorClass, ErrorSpec, CONDUCTIVITY_RANGE, ROT_XY_RANGE, ROT_Z_RANGE, SCALE_RANGE, TRANSLATION_RANGE,
};
