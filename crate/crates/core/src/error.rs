use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chunk spec: {0}")]
    InvalidSpec(String),
    #[error("invalid range: min {min} > max {max}")]
    InvalidRange { min: usize, max: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("insufficient input: need at least {needed} frames, got {got}")]
    InsufficientInput { needed: usize, got: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid upsample factor {0}")]
    InvalidFactor(usize),
    #[error("invalid chunk: {0}")]
    InvalidChunk(String),
    #[error("invalid speaker id {id}: model has {speakers} speakers")]
    InvalidSpeaker { id: usize, speakers: usize },
    #[error("filter design error: {0}")]
    Design(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid window length {0}: must be odd and at least 3")]
    InvalidLength(usize),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("correlation undefined: only {0} jointly voiced frames")]
    UndefinedCorrelation(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("negative time: {0}")]
    NegativeTime(String),
    #[error("audio duration must be positive")]
    ZeroDuration,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model format: {0}")]
    Format(#[from] FormatError),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Model container load failures. Each cause is distinguishable by variant.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unknown tensor `{0}` not in schema")]
    UnknownTensor(String),
    #[error("duplicate tensor `{0}`")]
    DuplicateTensor(String),
    #[error("tensor `{name}` has shape {found:?}, schema expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor `{0}` overlaps another tensor or exceeds the payload")]
    BadOffset(String),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("tensor `{0}` is read-only")]
    ReadOnly(String),
}
