use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("box radius must be at least 1, got {0}")]
    InvalidRadius(i32),

    #[error("box mismatch: expected radius {expected}, found {found}")]
    BoxMismatch { expected: i32, found: i32 },

    #[error("cannot restrict a radius-{from} field to the larger radius {to}")]
    RestrictToLarger { from: i32, to: i32 },

    #[error("field has {found} values, radius {radius} needs {expected}")]
    LengthMismatch {
        radius: i32,
        expected: usize,
        found: usize,
    },

    #[error("scale L = {0} must be a positive multiple of 4")]
    InvalidScale(i32),

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("{stage}: CG stopped after {iterations} iterations at relative residual {relative_residual:e}")]
    NotConverged {
        stage: String,
        iterations: usize,
        relative_residual: f64,
    },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("point {0:?} lies too close to the source support")]
    NearSource([f64; 3]),

    #[error("Green function is singular at the origin")]
    SingularPoint,

    #[error("derivative order {0} exceeds the supported maximum of 4")]
    DerivativeOrder(usize),

    #[error("homogenized tensor is degenerate: {0}")]
    DegenerateTensor(String),

    #[error("coefficient field violates ellipticity bounds [{lower}, {upper}]")]
    Ellipticity { lower: f64, upper: f64 },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("slope fit needs at least 3 distinct scales, got {0}")]
    TooFewPoints(usize),

    #[error("slope fit needs positive values, got {0}")]
    NonPositiveValue(f64),

    #[error("radius {radius} exceeds the available box radius {available}")]
    RadiusOverflow { radius: i32, available: i32 },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("unknown algorithm kind `{0}`")]
    UnknownKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
