//! Core vocabulary and decision rules for LLM-in-the-loop check-worthiness
//! annotation.
//!
//! This crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function over immutable values: label taxonomy, prompt construction,
//! majority voting and routing, blind judge cases, adjudication precedence,
//! effort accounting and the agreement / hypothesis-testing statistics.
//! IO, HTTP and persistence live in the `loopwright` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod effort;
pub mod error;
pub mod experiment;
pub mod label;
pub mod metrics;
pub mod model;
pub mod prompt;
pub mod record;
pub mod routing;

pub use effort::{effort_report, EffortReport, Share, StratumEffort};
pub use error::{MetricError, PromptError, RoutingError};
pub use label::{collapse_binary, BinaryCwLabel, CwLabel, HsLabel, Label};
pub use model::{ModelRegistry, ModelSpec, SizeClass};
pub use prompt::{build_cw_prompt, build_hs_prompt, parse_label, PromptBundle, TaskKind};
pub use record::{
    validate_message, AnnotationEvent, AnnotationKey, AnnotationSet, AnnotatorKind, AnnotatorRef,
    ArgumentRole, ClaimRecord, MessageRecord, PromptMode, ProvenanceCategory, Timestamp,
    ValidationIssue, ValidationPolicy, ValidationReport,
};
pub use routing::{
    adjudicate, aggregate_platinum, classify_variability, claim_seed, majority_vote,
    make_judge_case, reconcile, FinalLabelRecord, JudgeCase, NeedsJudgeReason, RoutingDecision,
    TripleRun, VariabilityClass,
};
