use thiserror::Error;

/// Coarse classification used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameter values or malformed requests.
    Validation,
    /// Input data that cannot be used as given.
    Data,
    /// A numerical routine failed (singular systems and the like).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset contains no data rows")]
    EmptyDataset,
    #[error("line {line}: invalid label `{token}`")]
    InvalidLabel { line: usize, token: String },
    #[error("line {line}, column `{column}`: `{token}` is not a finite number")]
    NonNumericFeature {
        line: usize,
        column: String,
        token: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("no labeled positives after splitting")]
    NoLabeledPositives,
    #[error("unlabeled pool is empty")]
    NoUnlabeled,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} instances, found {found}")]
    TooFewInstances { needed: usize, found: usize },
    #[error("{found} instances exceed the dense-matrix limit of {limit}")]
    TooLarge { found: usize, limit: usize },
    #[error("similarity width sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("kernel width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("soft-threshold level must be positive, got {0}")]
    NonPositiveC(f64),
    #[error("linear system is singular or ill-conditioned (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },
    #[error("matrix B is singular or ill-conditioned (condition estimate {condition:.3e})")]
    SingularB { condition: f64 },
    #[error("linear-via-B kernel needs n_p > m and n_u > m (n_p={n_p}, n_u={n_u}, m={m})")]
    InsufficientRank { n_p: usize, n_u: usize, m: usize },
    #[error("iterates became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("M22 is zero")]
    DegenerateM22,
    #[error("precomputed kernels cannot score new instances")]
    UnsupportedForPrecomputed,
    #[error("PUF denominator pool is empty")]
    EmptyPool,
    #[error("no labeled positives to estimate recall from")]
    EmptyLabeledSet,
    #[error("fold {fold} holds no labeled positive ({n_p} labeled positives for {folds} folds)")]
    FoldWithoutLabeledPositive {
        fold: usize,
        n_p: usize,
        folds: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidParameter { .. }
            | NonPositiveSigma(_)
            | NonPositiveWidth(_)
            | NonPositiveC(_) => ErrorKind::Validation,
            SingularSystem { .. } | SingularB { .. } | DegenerateM22 | Diverged { .. } => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
