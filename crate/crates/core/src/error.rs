use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the capture pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point maps to infinity (|w| = {0:e})")]
    PointAtInfinity(f64),
    #[error("singular matrix (|det| = {0:e})")]
    SingularMatrix(f64),
    #[error("invalid quad: {0}")]
    InvalidQuad(String),
    #[error("no valid quad after {0} attempts")]
    GenerationExhausted(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("quad is not inside the {width}x{height} image")]
    QuadOutOfBounds { width: usize, height: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("corner {index} at ({x}, {y}) outside {width}x{height} heatmap")]
    CornerOutOfBounds { index: usize, x: f64, y: f64, width: usize, height: usize },
    #[error("heatmap has no mass")]
    EmptyHeatmap,
    #[error("sigma must be positive, got sigma_s={sigma_s}, sigma_c={sigma_c}")]
    NonPositiveSigma { sigma_s: f64, sigma_c: f64 },
    #[error("{path}:{line}: parse error: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: invalid `{field}`: {message}")]
    InvariantViolation { path: PathBuf, line: usize, field: String, message: String },

    #[error("class `{0}` has no samples")]
    EmptyClass(String),
    #[error("empty input")]
    EmptyInput,
    #[error("all samples rejected")]
    AllRejected,
    #[error("image {width}x{height} smaller than the {window}x{window} window")]
    ImageSmallerThanWindow { width: usize, height: usize, window: usize },
    #[error("statistic is not finite on resample {0}")]
    NonFiniteStatistic(usize),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image { path: path.into(), source }
    }
}
