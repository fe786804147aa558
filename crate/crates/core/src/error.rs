use std::path::PathBuf;

/// Errors produced across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector norm is zero or below 1e-12")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("set is empty")]
    EmptySet,
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("all points are identical; no nonzero variance direction")]
    DegenerateSet,
    #[error("split index {k} outside [1, {max}]")]
    InvalidSplit { k: usize, max: usize },
    #[error("need at least two categories with two members each")]
    InsufficientLabels,

    #[error("no candidates to filter")]
    EmptyCandidates,
    #[error("no exemplar images")]
    EmptyExemplars,
    #[error("names not found: {}", .0.join(", "))]
    UnresolvedName(Vec<String>),
    #[error("need {needed} resolvable candidates, found {found}")]
    InsufficientCandidates { needed: usize, found: usize },
    #[error("candidate list for `{0}` contains the target class or is empty")]
    InvalidCandidates(String),

    #[error("projection of `{0}` onto subspace is zero")]
    ZeroProjection(String),
    #[error("negative or non-finite loss weight")]
    InvalidWeights,

    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),

    #[error("step {t} outside [0, {total})")]
    OutOfRange { t: usize, total: usize },
    #[error("gradient contains NaN or Inf")]
    NonFiniteGradient,
    #[error("neighborhood spans {0} principal components; need at least 2 to split")]
    SplitInfeasible(usize),
    #[error("class `{0}` appears more than once")]
    DuplicateClass(String),
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),

    #[error("label `{0}` is not a known class")]
    UnknownLabel(String),
    #[error("gallery holds {found} items, need at least {needed}")]
    GalleryTooSmall { needed: usize, found: usize },

    #[error("bad magic {0:?}; expected \"EMB1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported EMB1 version {0}")]
    BadVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("record name is not valid UTF-8")]
    NonUtf8Name,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteGradient | Error::ZeroProjection(_) | Error::NonFinite(_)
        )
    }
}
