use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("mesh construction failed: {0}")]
    Construction(String),

    #[error("reference point ({0}, {1}) lies outside the unit square")]
    OutsideReference(f64, f64),

    #[error("unsupported quadrature order {0} (supported: 1..=6)")]
    QuadratureOrder(usize),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("edge {0} is a boundary edge; jumps are only defined on interior edges")]
    BoundaryEdge(usize),

    #[error("singular matrix at row {row}: {detail}")]
    Singular { row: usize, detail: String },

    #[error("linear solve inaccurate: relative residual {0:.3e}")]
    InaccurateSolve(f64),

    #[error("Newton did not converge on level {level} after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        level: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no finest-grid nonzero count available")]
    MissingFinestCount,

    #[error("empty estimate set")]
    EmptyEstimates,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
