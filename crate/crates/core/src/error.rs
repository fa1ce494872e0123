use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Each variant carries a stable name (see [`Error::name`]) that the CLI
/// writes into its JSON reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {location} sums to {sum}, expected 1")]
    RowNotStochastic { location: String, sum: f64 },
    #[error("negative probability at {location}")]
    NegativeProbability { location: String },
    #[error("exactly one of discount < 1 or a finite horizon must be given")]
    ModeAmbiguous,
    #[error("invalid discount {0}: must lie in [0, 1)")]
    InvalidDiscount(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reward support is invalid: {0}")]
    InvalidRewardSupport(String),
    #[error("model is not fully observable")]
    NotFullyObservable,
    #[error("model is not in finite-horizon mode")]
    NotFiniteHorizon,
    #[error("model is not in discounted mode")]
    NotDiscounted,
    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: String,
        index: usize,
        size: usize,
    },
    #[error("feasible set for {surface} at {key} is empty")]
    EmptyFeasibleSet { surface: String, key: String },
    #[error("reward support must be finite for reward attacks")]
    InfiniteRewardSupport,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("enumeration too large: {count} candidates (limit {limit})")]
    TooLarge { count: f64, limit: f64 },
    #[error("attack {action} is outside the feasible set at {state}")]
    InfeasibleAttack { state: String, action: String },
    #[error("attack policy has no entry for {state} at step {step}")]
    MissingPolicyEntry { state: String, step: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("game is not zero-sum")]
    NotZeroSum,
    #[error("observation attacks make the defense game partially observable; solving it is NP-hard and refused")]
    PartiallyObservable,
    #[error("observation (perceived-state) surface is enabled; optimal defense is NP-hard in this regime and refused")]
    ObservationSurfaceEnabled,
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("cell {0} is out of bounds")]
    OutOfBounds(usize),
    #[error("instances do not match: {0}")]
    MismatchedInstances(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::RowNotStochastic { .. } => "RowNotStochastic",
            Error::NegativeProbability { .. } => "NegativeProbability",
            Error::ModeAmbiguous => "ModeAmbiguous",
            Error::InvalidDiscount(_) => "InvalidDiscount",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidRewardSupport(_) => "InvalidRewardSupport",
            Error::NotFullyObservable => "NotFullyObservable",
            Error::NotFiniteHorizon => "NotFiniteHorizon",
            Error::NotDiscounted => "NotDiscounted",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::EmptyFeasibleSet { .. } => "EmptyFeasibleSet",
            Error::InfiniteRewardSupport => "InfiniteRewardSupport",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::TooLarge { .. } => "TooLarge",
            Error::InfeasibleAttack { .. } => "InfeasibleAttack",
            Error::MissingPolicyEntry { .. } => "MissingPolicyEntry",
            Error::EmptySample => "EmptySample",
            Error::NotZeroSum => "NotZeroSum",
            Error::PartiallyObservable => "PartiallyObservable",
            Error::ObservationSurfaceEnabled => "ObservationSurfaceEnabled",
            Error::InvalidLayout(_) => "InvalidLayout",
            Error::OutOfBounds(_) => "OutOfBounds",
            Error::MismatchedInstances(_) => "MismatchedInstances",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "Io",
            Error::Parse(_) => "Parse",
        }
    }

    /// Requests the toolkit declines on complexity grounds rather than because
    /// the input is wrong.
    pub fn is_scope_refusal(&self) -> bool {
        matches!(
            self,
            Error::PartiallyObservable | Error::ObservationSurfaceEnabled
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
