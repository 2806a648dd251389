use thiserror::Error;

use crate::geometry::Side;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("axis {axis} has {n} cells, at least {min} required")]
    AxisTooSmall { axis: usize, n: usize, min: usize },
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("region is empty")]
    EmptyRegion,
    #[error("radius {0} is not admissible")]
    BadRadius(f64),
    #[error("boundary patch has no dofs")]
    EmptyPatch,
    #[error("face {0} does not lie on the boundary")]
    FaceNotOnBoundary(usize),
    #[error("window does not intersect side {0:?}")]
    WindowMissesSide(Side),
    #[error("path is empty")]
    EmptyPath,
    #[error("path leaves the host region eroded by r3")]
    PathLeavesHost,
    #[error("ball placement made no progress along the path")]
    ChainStalled,
    #[error("ball chain violates {0}")]
    ChainInvariant(&'static str),
    #[error("region is not compactly contained in the grid (needs one cell of clearance)")]
    NotCompactlyContained,
    #[error("complement of the region has {0} connected components")]
    ComplementDisconnected(usize),
    #[error("{0}")]
    Hypothesis(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("tensor in cell {cell} is not symmetric")]
    NotSymmetric { cell: usize },
    #[error("tensor in cell {cell} has eigenvalue {eig} <= 0")]
    NotPositive { cell: usize, eig: f64 },
    #[error("layered transition width {width} is below one cell ({h})")]
    JumpTooSharp { width: f64, h: f64 },
    #[error("invalid material spec: {0}")]
    Spec(String),
    #[error("material has {got} cells, grid has {expected}")]
    SizeMismatch { got: usize, expected: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("omega must be positive, got {0}")]
    BadOmega(f64),
    #[error("material fails ellipticity in cell {cell}")]
    Ellipticity { cell: usize },
    #[error("resonant frequency: margin {margin:.3e} below threshold {threshold:.3e}; try omega = {suggested_lo:.6} or {suggested_hi:.6}")]
    Resonant {
        margin: f64,
        threshold: f64,
        suggested_lo: f64,
        suggested_hi: f64,
    },
    #[error("zero pivot in dense factorization at column {0}")]
    SingularPivot(usize),
    #[error("iterative solver stopped after {iterations} iterations at relative residual {residual:.3e}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("trace is not supported on the boundary (edge {0})")]
    TraceOffBoundary(usize),
    #[error("vector length {got} does not match expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("non-finite value in input")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(
        "patch has {0} dofs, above the dense limit of 4000; coarsen the grid or shrink the patch"
    )]
    PatchTooLarge(usize),
    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("{0}")]
    KindMismatch(&'static str),
    #[error("need at least {need} data points, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("input value {0} is not admissible")]
    BadInput(f64),
    #[error("exponent p must be in [1, inf], got {0}")]
    BadExponent(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RungeError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("theta must lie in [0, 1), got {0}")]
    BadTheta(f64),
    #[error("parameter {0} must be positive")]
    NonPositive(&'static str),
    #[error("singular value decomposition failed")]
    Svd,
    #[error("input has wrong size: {got} vs {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("malformed cache payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad magic in {0}")]
    BadMagic(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: u32, found: u32 },
    #[error("provenance mismatch: expected {expected:016x}, found {found:016x}")]
    ProvenanceMismatch { expected: u64, found: u64 },
    #[error("length mismatch: header declares {declared} payload bytes, file holds {available}")]
    Length { declared: u64, available: u64 },
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message} (line {line}, column {column})")]
    Parse {
        path: String,
        message: String,
        line: usize,
        column: usize,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Top-level error for experiment drivers and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Runge(#[from] RungeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Experiment(String),
}
