use std::path::PathBuf;

use thiserror::Error;

use crate::hvector::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("model `{0}` has no U-Net bottleneck block")]
    IncompatibleArchitecture(String),
    #[error("backend `{model_id}` does not expose capture layer `{layer}`")]
    UnsupportedLayer { model_id: String, layer: String },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: Shape, actual: Shape },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite activation at index {index}")]
    NonFiniteActivation { index: usize },
    #[error("expected {expected} capture event(s), backend reported {actual}")]
    CaptureCount { expected: usize, actual: usize },
    #[error("backend `{0}` does not support middle-block injection")]
    InjectionUnsupported(String),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("empty batch")]
    EmptyBatch,
    #[error("batch element {index} failed: {source}")]
    BatchElement {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("empty input")]
    EmptyInput,

    #[error("storage full while writing {0}")]
    StorageFull(PathBuf),
    #[error("manifest corrupt: {0}")]
    ManifestCorrupt(String),
    #[error("store at {0} is locked by another writer")]
    StoreLocked(PathBuf),
    #[error("store opened read-only")]
    ReadOnly,
    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("matrix is already normalized ({0})")]
    AlreadyNormalized(String),
    #[error("zero variance in {0}")]
    ZeroVariance(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("invalid PCA rank {rank} (allowed 1..={max})")]
    BadM { rank: usize, max: usize },
    #[error("index {index} out of range (len {len})")]
    BadIndex { index: usize, len: usize },
    #[error("missing variant: {0}")]
    MissingVariant(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("need at least two clusters, found {0}")]
    SingleCluster(usize),
    #[error("clustering engine failed: {0}")]
    Engine(String),

    #[error("endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("endpoint timed out: {0}")]
    Timeout(String),
    #[error("endpoint returned malformed response: {0}")]
    BadResponse(String),
    #[error("image could not be decoded: {0}")]
    UndecodableImage(String),

    #[error("missing analysis: {0}")]
    MissingAnalysis(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPrompt(_) => "InvalidPrompt",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::UnknownModel(_) => "UnknownModel",
            Error::IncompatibleArchitecture(_) => "IncompatibleArchitecture",
            Error::UnsupportedLayer { .. } => "UnsupportedLayer",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::NonFiniteActivation { .. } => "NonFiniteActivation",
            Error::CaptureCount { .. } => "CaptureCount",
            Error::InjectionUnsupported(_) => "InjectionUnsupported",
            Error::ModeMismatch(_) => "ModeMismatch",
            Error::EmptyBatch => "EmptyBatch",
            Error::BatchElement { .. } => "BatchElement",
            Error::EmptyInput => "EmptyInput",
            Error::StorageFull(_) => "StorageFull",
            Error::ManifestCorrupt(_) => "ManifestCorrupt",
            Error::StoreLocked(_) => "StoreLocked",
            Error::ReadOnly => "ReadOnly",
            Error::UnknownId(_) => "UnknownId",
            Error::ZeroVector => "ZeroVector",
            Error::AlreadyNormalized(_) => "AlreadyNormalized",
            Error::ZeroVariance(_) => "ZeroVariance",
            Error::RankDeficient(_) => "RankDeficient",
            Error::BadM { .. } => "BadM",
            Error::BadIndex { .. } => "BadIndex",
            Error::MissingVariant(_) => "MissingVariant",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::SingleCluster(_) => "SingleCluster",
            Error::Engine(_) => "Engine",
            Error::EndpointUnavailable(_) => "EndpointUnavailable",
            Error::Timeout(_) => "Timeout",
            Error::BadResponse(_) => "BadResponse",
            Error::UndecodableImage(_) => "UndecodableImage",
            Error::MissingAnalysis(_) => "MissingAnalysis",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::StorageFull {
            Error::StorageFull(path)
        } else {
            Error::Io { path, source }
        }
    }
}
