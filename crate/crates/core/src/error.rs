use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{kind} loss cannot be used with these targets")]
    LossTargetMismatch { kind: &'static str },
    #[error("empty batch or dataset")]
    Empty,
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("knots must be strictly increasing (knot {index})")]
    DuplicateKnots { index: usize },
    #[error("depth {depth} too small for the {task} ticket (needs at least {min})")]
    DepthTooSmall { task: &'static str, depth: usize, min: usize },
    #[error("mother layer {layer} has width {mother} but the target needs {target}")]
    WidthInsufficient { layer: usize, mother: usize, target: usize },
    #[error("no candidate with positive scaling for target neuron {neuron} in layer {layer}")]
    NoPositiveCandidate { layer: usize, neuron: usize },
    #[error("inconsistent plant report: {0}")]
    InconsistentReport(String),
    #[error("per-layer tolerance {eps_l} in layer {layer} is not below 1")]
    DegenerateTolerance { layer: usize, eps_l: f64 },
    #[error("{method} needs a dataset")]
    MissingData { method: &'static str },
}
