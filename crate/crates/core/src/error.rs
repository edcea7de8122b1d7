use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("prefix `{0}` matches no parameter")]
    NoMatchingParam(String),

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("duplicate parameter path `{0}`")]
    DuplicateParam(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGrad(String),

    #[error("parameter paths differ: missing {missing:?}, unexpected {unexpected:?}")]
    PathMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("config: unknown key `{0}`")]
    UnknownConfigKey(String),

    #[error("config: invalid value {value:?} for `{key}` (expected {expected})")]
    InvalidConfigValue {
        key: String,
        value: String,
        expected: String,
    },

    #[error("seed conflict: checkpoint was trained with seed {checkpoint}, run requests seed {requested}")]
    SeedConflict { checkpoint: u64, requested: u64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
