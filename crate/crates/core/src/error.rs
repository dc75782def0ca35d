use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: String,
        actual: String,
    },
    #[error("{0} below minimum")]
    BelowMinimum(&'static str),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("surfaces intersect or are too close: {0}")]
    SurfacesIntersect(String),
    #[error("near-singular kernel: source {source_node} and sensor {sensor_node} are {distance_mm:.3} mm apart")]
    NearSingular {
        source_node: usize,
        sensor_node: usize,
        distance_mm: f64,
    },
    #[error("mesh is disconnected")]
    Disconnected,
    #[error("linear system is singular")]
    Singular,
    #[error("simulation became unstable at step {step}: |value| = {value}")]
    Unstable { step: usize, value: f64 },
    #[error("zero signal")]
    ZeroSignal,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("loss node is not scalar (shape {0})")]
    NonScalarLoss(String),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("label map has no populated node")]
    UnlabeledMap,
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: impl core::fmt::Debug, actual: impl core::fmt::Debug) -> Self {
        Error::Shape {
            what,
            expected: alloc::format!("{expected:?}"),
            actual: alloc::format!("{actual:?}"),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
