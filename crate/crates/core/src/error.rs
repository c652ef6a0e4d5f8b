use crate::embedding_io::Label;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),

    #[error("bad magic bytes (expected NCEB)")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file truncated while reading {context}")]
    TruncatedFile { context: &'static str },
    #[error("{count} unexpected trailing bytes after last record")]
    TrailingBytes { count: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {context}")]
    NonFiniteValue { context: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown label token `{0}` (expected `real` or `fake`)")]
    UnknownLabelToken(String),

    #[error("class {0} has no records")]
    EmptyClass(Label),
    #[error("degenerate geometry: class means coincide, nc1 undefined")]
    DegenerateGeometry,
    #[error("no score for sample `{0}`")]
    MissingScore(String),

    #[error("k = {k} exceeds the number of points ({points})")]
    KTooLarge { k: usize, points: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("overlap report needs at least two clusters")]
    SingleCluster,
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("requested {requested} samples but class has only {available}")]
    CountExceedsClass { requested: usize, available: usize },

    #[error("score table holds only one class")]
    SingleClassOnly,

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("empty clip")]
    EmptyClip,
    #[error("clip of {len} samples is shorter than one 512-sample frame")]
    ClipTooShort { len: usize },
    #[error("negative power value")]
    NegativePower,
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergenceDetected { epoch: usize, loss: f64 },
}

impl Error {
    /// Stable identifier for the error kind, used in machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IoFailure(_) => "IoFailure",
            Error::BadMagic => "BadMagic",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::TrailingBytes { .. } => "TrailingBytes",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::DuplicateSampleId(_) => "DuplicateSampleId",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::UnknownLabelToken(_) => "UnknownLabelToken",
            Error::EmptyClass(_) => "EmptyClass",
            Error::DegenerateGeometry => "DegenerateGeometry",
            Error::MissingScore(_) => "MissingScore",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::EmptyInput => "EmptyInput",
            Error::SingleCluster => "SingleCluster",
            Error::EmptyCluster(_) => "EmptyCluster",
            Error::CountExceedsClass { .. } => "CountExceedsClass",
            Error::SingleClassOnly => "SingleClassOnly",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptFile(_) => "CorruptFile",
            Error::EmptyClip => "EmptyClip",
            Error::ClipTooShort { .. } => "ClipTooShort",
            Error::NegativePower => "NegativePower",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
        }
    }
}
