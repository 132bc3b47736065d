use std::path::PathBuf;

/// Errors produced by the encoding and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("embedding file {path} is empty")]
    EmptyEmbeddingFile { path: PathBuf },

    #[error("embedding dimension {found} does not match expected {expected}")]
    DimMismatch { expected: usize, found: usize },

    #[error("duplicate token in vocabulary: {0}")]
    DuplicateToken(String),

    #[error("matrix is rank deficient; redraw the sample")]
    RankDeficient,

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("spectral radius is zero; cannot scale to target {target}")]
    ZeroSpectralRadius { target: f64 },

    #[error("sparsity fraction {0} outside [0, 1)")]
    BadSparsity(f64),

    #[error("recurrent encoders need an even output dimension, got {0}")]
    OddDimension(usize),

    #[error("invalid encoder config: {0}")]
    BadConfig(String),

    #[error("pooling over {n} states with n_max {n_max} < n")]
    BadPadLength { n: usize, n_max: usize },

    #[error("feature mode needs a second vector")]
    MissingPairVector,

    #[error("target class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("probability targets must sum to 1 (got {0})")]
    UnnormalizedTarget(f64),

    #[error("training loss became non-finite at epoch {epoch}")]
    NanLoss { epoch: usize },

    #[error("score {score} outside support [{lo}, {hi}]")]
    ScoreOutOfSupport { score: f64, lo: f64, hi: f64 },

    #[error("dataset {path}: {message}")]
    BadDataset { path: PathBuf, message: String },

    #[error("cannot make {k} folds from {n} examples")]
    TooFewExamples { n: usize, k: usize },

    #[error("pearson correlation undefined: {0}")]
    DegenerateCorrelation(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
