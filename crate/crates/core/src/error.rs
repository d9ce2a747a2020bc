use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("transport problem too large: {rows}x{cols} exceeds {limit} cells; quantize coarser")]
    SizeLimit { rows: usize, cols: usize, limit: usize },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier { name: String, line: usize, column: usize },

    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity { name: String, expected: String, got: usize },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("expression is not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    #[error("invalid game specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("control path does not cover [{from}, {to}]")]
    MeshCoverage { from: f64, to: f64 },

    #[error("CFL condition violated: dt * sum(sigma/dx) = {ratio:.6} > theta = {theta}")]
    Cfl { ratio: f64, theta: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("configuration left the interpolation grid (excursion {excursion:.6})")]
    GridExcursion { excursion: f64 },

    #[error("instance too large for enumeration: {0}")]
    EnumerationLimit(String),

    #[error("time {0} is not a mesh node")]
    OffMesh(f64),

    #[error("terminal data not ordered: m_hi - m_lo = {gap} at a grid node")]
    TerminalOrder { gap: f64 },

    #[error("missing Lipschitz constant")]
    MissingLipschitz,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
