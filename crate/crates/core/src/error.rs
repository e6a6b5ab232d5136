use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate geometry: {what} = {value:e}")]
    DegenerateGeometry { what: &'static str, value: f64 },

    #[error("acos argument {value} outside [-1, 1]")]
    ArgOutOfRange { value: f64 },

    /// `|x| → 1` makes `1/sqrt(1 - x²)` unbounded.
    #[error("angle singularity: |x| = {x} too close to 1")]
    AngleSingularity { x: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("measurement {r} outside the support of the noise model")]
    OutOfSupport { r: f64 },

    #[error("intensity formulas disagree with the oracle: {0}")]
    UnresolvedIntensity(String),

    #[error("edge {index}: {source}")]
    Edge { index: usize, source: Box<Error> },

    /// The Fisher matrix is singular; `null_space` holds the unobservable directions.
    #[error("singular Fisher matrix (condition number {condition:e})")]
    SingularFim { condition: f64, null_space: Vec<Vec<f64>> },

    #[error("Fisher matrix has zero trace")]
    ZeroTrace,

    #[error("matrix is not a rotation")]
    NotRotation,

    #[error("projected Fisher matrix M^T F M is singular")]
    SingularProjectedFim,

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("degenerate conformation: landmarks are collinear")]
    DegenerateConformation,

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
}

impl Error {
    pub(crate) fn at_edge(self, index: usize) -> Self {
        match self {
            e @ Error::Edge { .. } => e,
            e => Error::Edge { index, source: Box::new(e) },
        }
    }

    /// Configuration problems (exit code 1) as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Parse { .. })
    }
}
