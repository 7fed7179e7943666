use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TraceError>;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // TEF format
    #[error("not a TEF file")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("truncated header: {0} of 24 bytes")]
    TruncatedHeader(usize),
    #[error("payload size mismatch: header implies {expected} bytes, found {found}")]
    PayloadSizeMismatch { expected: u64, found: u64 },
    #[error("non-finite frame value at frame {frame}, dim {dim}")]
    NonFiniteFrame { frame: usize, dim: usize },
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    // manifests
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("manifest line {line}: duplicate utterance id `{id}`")]
    DuplicateId { line: usize, id: String },

    // dynamics
    #[error("zero-norm frame at index {0}")]
    ZeroNormFrame(usize),
    #[error("too short for {what}: need at least {required}, got {actual}")]
    TooShort {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    // statistics
    #[error("unknown statistic id `{0}`")]
    UnknownStatistic(String),
    #[error("statistic `{id}` needs at least {required} {unit}, got {actual}")]
    StatisticTooShort {
        id: String,
        required: usize,
        unit: &'static str,
        actual: usize,
    },
    #[error("missing statistic `{0}`")]
    MissingStatistic(String),
    #[error("window width must be at least 1")]
    InvalidWindow,

    // calibration / metrics
    #[error("both bonafide and spoof labels are required ({bonafide} bonafide, {spoof} spoof)")]
    SingleClass { bonafide: usize, spoof: usize },
    #[error("non-finite score for `{0}`")]
    NonFiniteScore(String),
    #[error("grid step {0} does not divide 1 evenly")]
    InvalidGridStep(f64),
    #[error("no usable candidate statistics")]
    EmptyCandidates,
    #[error("statistic `{0}` is constant over the calibration set")]
    DegenerateStatistic(String),
    #[error("unsupported profile schema version {0}")]
    UnsupportedSchema(u32),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("utterance `{id}`: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<TraceError>,
    },
    #[error("{0}")]
    Mismatch(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl TraceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TraceError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_utterance(id: &str, err: TraceError) -> Self {
        TraceError::Utterance {
            id: id.to_string(),
            source: Box::new(err),
        }
    }
}
