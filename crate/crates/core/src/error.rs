use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("action index {0} is outside 0..200")]
    InvalidActionIndex(usize),
    #[error("illegal action {index} for player {player}")]
    IllegalAction { player: usize, index: usize },
    #[error("player {player} acted out of turn (turn holder is {turn})")]
    OutOfTurn { player: usize, turn: usize },
    #[error("the match is already over")]
    MatchOver,
    #[error("finishing order is incomplete or invalid: {0:?}")]
    IncompleteOrder(Vec<usize>),
    #[error("every entry of the action mask is false")]
    EmptyMask,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight file version mismatch: {0}")]
    VersionMismatch(String),
    #[error("non-finite gradient")]
    NonFiniteGrad,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("backward called without a cached forward pass")]
    NoForwardCache,

    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("opponent weight must be positive, got {0}")]
    InvalidOpponentWeight(f64),

    #[error("missing questionnaire item `{0}`")]
    MissingItem(String),
    #[error("invalid questionnaire row: {0}")]
    InvalidRecord(String),
    #[error("history is empty")]
    EmptyHistory,
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("empty log")]
    EmptyLog,

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used on the wire and in logs.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidActionIndex(_) => "INVALID_INDEX",
            Error::IllegalAction { .. } => "ILLEGAL_ACTION",
            Error::OutOfTurn { .. } => "OUT_OF_TURN",
            Error::MatchOver => "MATCH_OVER",
            Error::IncompleteOrder(_) => "INCOMPLETE_ORDER",
            Error::EmptyMask => "EMPTY_MASK",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::VersionMismatch(_) => "VERSION_MISMATCH",
            Error::NonFiniteGrad => "NONFINITE_GRAD",
            Error::NonFiniteLoss => "NONFINITE_LOSS",
            Error::NoForwardCache => "NO_FORWARD_CACHE",
            Error::EmptyBuffer => "EMPTY_BUFFER",
            Error::InvalidOpponentWeight(_) => "INVALID_WEIGHT",
            Error::MissingItem(_) => "MISSING_ITEM",
            Error::InvalidRecord(_) => "INVALID_RECORD",
            Error::EmptyHistory => "EMPTY_HISTORY",
            Error::DegenerateDataset(_) => "DEGENERATE_DATASET",
            Error::EmptyLog => "EMPTY_LOG",
            Error::Config(_) => "CONFIG",
            Error::Io { .. } => "IO",
            Error::Json(_) => "JSON",
            Error::Csv(_) => "CSV",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
