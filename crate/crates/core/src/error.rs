use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed image: {reason}")]
    MalformedImage { path: PathBuf, reason: String },
    #[error("{path}: expected 16-bit grayscale, found {found}")]
    UnsupportedBitDepth { path: PathBuf, found: String },
    #[error("{path}: zero-sized image")]
    EmptyImage { path: PathBuf },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("duplicate response for observer {observer_id}, scene {scene_id}, point {point_id}")]
    DuplicateResponse {
        observer_id: String,
        scene_id: String,
        point_id: u32,
    },
    #[error("no estimate for scene {scene_id} point {point_id}")]
    MissingCoverage { scene_id: String, point_id: u32 },
    #[error("rank-deficient design (columns {columns:?})")]
    RankDeficient { columns: Vec<usize> },
    #[error("zero variance input")]
    ZeroVariance,
    #[error("residual after removing the control variable is degenerate")]
    DegenerateResidual,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("sampling exhausted after {restarts} restarts (best attempt placed {best} points)")]
    SamplingExhausted { restarts: usize, best: usize },
    #[error("scene {0} has no segmentation map")]
    MissingSegmentation(String),
    #[error("quartiles undefined: {0} scorable records (need at least 4)")]
    QuartilesUndefined(usize),
    #[error("operation requires absolute depth, got {0}")]
    WrongOutputType(String),
    #[error("similarity unstable: {degenerate} of {iterations} iterations degenerate for {subject}")]
    SimilarityUnstable {
        subject: String,
        degenerate: usize,
        iterations: usize,
    },
    #[error("decomposition unreliable: {failed} of {total} scenes rank-deficient")]
    DecompositionUnreliable { failed: usize, total: usize },
    #[error("no points inside depth range [{min}, {max}]")]
    EmptyRange { min: f64, max: f64 },
    #[error("series cover different scenes")]
    SceneMismatch,
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable, machine-parsable class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::MalformedImage { .. } => "MalformedImage",
            Error::UnsupportedBitDepth { .. } => "UnsupportedBitDepth",
            Error::EmptyImage { .. } => "EmptyImage",
            Error::Parse { .. } => "Parse",
            Error::Invalid(_) => "Invalid",
            Error::DuplicateResponse { .. } => "DuplicateResponse",
            Error::MissingCoverage { .. } => "MissingCoverage",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::ZeroVariance => "ZeroVariance",
            Error::DegenerateResidual => "DegenerateResidual",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::SamplingExhausted { .. } => "SamplingExhausted",
            Error::MissingSegmentation(_) => "MissingSegmentation",
            Error::QuartilesUndefined(_) => "QuartilesUndefined",
            Error::WrongOutputType(_) => "WrongOutputType",
            Error::SimilarityUnstable { .. } => "SimilarityUnstable",
            Error::DecompositionUnreliable { .. } => "DecompositionUnreliable",
            Error::EmptyRange { .. } => "EmptyRange",
            Error::SceneMismatch => "SceneMismatch",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
