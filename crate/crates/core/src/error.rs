use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("claim at position {0} has no check-worthiness label")]
    MissingCwLabel(usize),
    #[error("allowed outputs must be non-empty and distinct")]
    InvalidAllowedOutputs,
    #[error("model output {0:?} is not one of the allowed labels")]
    InvalidModelOutput(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingError {
    #[error("claim {claim_id}: human and LLM majority agree, nothing to adjudicate")]
    InconsistentCase { claim_id: String },
    #[error("claim {claim_id}: judge case does not match the labels being adjudicated")]
    CaseMismatch { claim_id: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("raters share no labeled items")]
    NoCommonItems,
    #[error("need at least {needed} common items, found {found}")]
    InsufficientItems { needed: usize, found: usize },
    #[error("expected agreement is 1; kappa is undefined")]
    DegenerateDistribution,
    #[error("alpha is undefined: no pairable values or no expected disagreement")]
    UndefinedAlpha,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("an annotation matrix needs at least two raters")]
    TooFewRaters,
    #[error("unknown rater {0:?}")]
    UnknownRater(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("item sets differ; {} items only in one track", .0.len())]
    ItemSetMismatch(Vec<String>),
    #[error("no scores for message {message_id} in dimension {dimension}")]
    MissingScores { message_id: String, dimension: String },
}
