use std::path::PathBuf;

use thiserror::Error;

/// Failures while reading or validating a boundary representation.
#[derive(Debug, Error)]
pub enum SolidError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("face {face}: vertex index {index} out of range ({vertex_count} vertices)")]
    FaceIndex {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face}: degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("edge ({a}, {b}) of face {face}: mesh is not closed ({count} incident faces)")]
    OpenEdge {
        face: usize,
        a: usize,
        b: usize,
        count: usize,
    },
    #[error("edge ({a}, {b}) of face {face}: inconsistent face orientation")]
    InconsistentOrientation { face: usize, a: usize, b: usize },
    #[error("mesh encloses no volume (signed volume {0:e})")]
    EmptyVolume(f64),
    #[error("loop {loop_index}: {message}")]
    InvalidLoop { loop_index: usize, message: String },
    #[error("loops {first} and {second} intersect (segments {first_segment} and {second_segment})")]
    SelfIntersection {
        first: usize,
        first_segment: usize,
        second: usize,
        second_segment: usize,
    },
    #[error("polygon encloses no area (signed area {0:e})")]
    EmptyArea(f64),
    #[error("unsupported solid format: {0}")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid integration policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("recursion budget exhausted at depth {depth}: residual element angle {residual_angle:e}")]
    RecursionExhausted { depth: u32, residual_angle: f64 },
    #[error("query point lies on the boundary (distance {distance:e} below floor {floor:e})")]
    OnBoundary { distance: f64, floor: f64 },
    #[error("grid dimension {grid} does not match solid dimension {solid}")]
    DimensionMismatch { grid: usize, solid: usize },
}

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("axis {axis} has {count} nodes; a power of two is required")]
    NotPowerOfTwo { axis: usize, count: usize },
    #[error("mode count {modes} does not describe an even centered window in {dim}D")]
    InvalidModeCount { modes: usize, dim: usize },
    #[error("window side {side} exceeds grid axis {axis} ({count} nodes)")]
    WindowTooLarge { side: usize, axis: usize, count: usize },
    #[error("rotation is not proper orthogonal (orthogonality residual {residual:e}, det {det})")]
    NotARotation { residual: f64, det: f64 },
    #[error("2D rotations must act in the xy-plane")]
    OutOfPlaneRotation,
    #[error("oracle size guard: {nodes} nodes exceeds {limit}")]
    SizeGuard { nodes: usize, limit: usize },
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("moving part has no vector spectrum")]
    MissingVectorSpectrum,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Solid(#[from] SolidError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
