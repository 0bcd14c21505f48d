//! Corpus records, annotation events and ingest validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::label::{CwLabel, HsLabel};

/// Milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgumentRole {
    Premise,
    Conclusion,
    Unmarked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    /// Filled from the parent message when the claim arrives nested.
    #[serde(default)]
    pub message_id: String,
    pub index: u32,
    pub text: String,
    pub argument_role: ArgumentRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_hs_label: Option<HsLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub message_id: String,
    pub hs_label: HsLabel,
    pub claims: Vec<ClaimRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

impl MessageRecord {
    /// Claims sorted by their corpus-provided index.
    pub fn ordered_claims(&self) -> Vec<&ClaimRecord> {
        let mut claims: Vec<&ClaimRecord> = self.claims.iter().collect();
        claims.sort_by_key(|c| c.index);
        claims
    }

    /// Concatenation of the claim texts in index order.
    pub fn reconstructed_text(&self) -> String {
        let parts: Vec<&str> = self.ordered_claims().iter().map(|c| c.text.as_str()).collect();
        parts.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    Human,
    Model,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnnotatorRef {
    pub kind: AnnotatorKind,
    pub identifier: String,
}

impl AnnotatorRef {
    pub fn new(kind: AnnotatorKind, identifier: impl Into<String>) -> Self {
        Self { kind, identifier: identifier.into() }
    }

    pub fn human(identifier: impl Into<String>) -> Self {
        Self::new(AnnotatorKind::Human, identifier)
    }

    pub fn model(identifier: impl Into<String>) -> Self {
        Self::new(AnnotatorKind::Model, identifier)
    }

    pub fn judge(identifier: impl Into<String>) -> Self {
        Self::new(AnnotatorKind::Judge, identifier)
    }
}

impl fmt::Display for AnnotatorRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            AnnotatorKind::Human => "human",
            AnnotatorKind::Model => "model",
            AnnotatorKind::Judge => "judge",
        };
        write!(f, "{kind}:{}", self.identifier)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    OneShot,
    /// Human and judge labels.
    #[default]
    NotApplicable,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::OneShot => "one_shot",
            PromptMode::NotApplicable => "not_applicable",
        }
    }
}

/// One label assignment by one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub claim_id: String,
    pub source: AnnotatorRef,
    pub label: CwLabel,
    #[serde(default)]
    pub run_index: u32,
    #[serde(default)]
    pub prompt_mode: PromptMode,
    #[serde(default)]
    pub created_at: Timestamp,
}

pub type AnnotationKey = (String, AnnotatorRef, u32, PromptMode);

impl AnnotationEvent {
    pub fn key(&self) -> AnnotationKey {
        (self.claim_id.clone(), self.source.clone(), self.run_index, self.prompt_mode)
    }
}

/// Annotation events keyed by `(claim_id, source, run_index, prompt_mode)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    events: BTreeMap<AnnotationKey, AnnotationEvent>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rejects an event whose key is already present; the stored event is
    /// left untouched.
    pub fn insert(&mut self, event: AnnotationEvent) -> Result<(), AnnotationEvent> {
        let key = event.key();
        if self.events.contains_key(&key) {
            return Err(event);
        }
        self.events.insert(key, event);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events in key order.
    pub fn iter(&self) -> impl Iterator<Item = &AnnotationEvent> {
        self.events.values()
    }

    pub fn for_claim<'a>(&'a self, claim_id: &'a str) -> impl Iterator<Item = &'a AnnotationEvent> {
        self.events.values().filter(move |e| e.claim_id == claim_id)
    }
}

/// How a gold label came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceCategory {
    /// Human label equals the LLM majority.
    Accepted,
    JudgeSidedHuman,
    JudgeSidedLlm,
    /// Judge chose a label different from both presented ones.
    JudgeOverride,
    /// No LLM majority existed and the judge departed from the human label.
    JudgeIndependent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ValidationIssue {
    EmptyClaims,
    NonContiguousIndices { indices: Vec<u32> },
    EmptyClaimText { claim_id: String },
    DuplicateClaimId { claim_id: String },
    ForeignClaim { claim_id: String, message_id: String },
    TooFewClaimsForHateful { count: usize, minimum: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::EmptyClaims => f.write_str("message has no claims"),
            ValidationIssue::NonContiguousIndices { indices } => {
                write!(f, "non-contiguous indices {indices:?}")
            }
            ValidationIssue::EmptyClaimText { claim_id } => write!(f, "claim {claim_id} has empty text"),
            ValidationIssue::DuplicateClaimId { claim_id } => write!(f, "duplicate claim id {claim_id}"),
            ValidationIssue::ForeignClaim { claim_id, message_id } => {
                write!(f, "claim {claim_id} declares parent {message_id}")
            }
            ValidationIssue::TooFewClaimsForHateful { count, minimum } => {
                write!(f, "hateful message has {count} claims, expected at least {minimum}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub message_id: String,
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationPolicy {
    /// Hateful messages with fewer claims produce a warning. `None` disables
    /// the check for corpora without that structure.
    pub min_hateful_claims: Option<usize>,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self { min_hateful_claims: Some(2) }
    }
}

pub fn validate_message(m: &MessageRecord) -> ValidationReport {
    validate_message_with(m, &ValidationPolicy::default())
}

pub fn validate_message_with(m: &MessageRecord, policy: &ValidationPolicy) -> ValidationReport {
    let mut report = ValidationReport { message_id: m.message_id.clone(), ..Default::default() };
    if m.claims.is_empty() {
        report.errors.push(ValidationIssue::EmptyClaims);
        return report;
    }

    let mut indices: Vec<u32> = m.claims.iter().map(|c| c.index).collect();
    indices.sort_unstable();
    if indices.iter().enumerate().any(|(i, idx)| *idx as usize != i) {
        report.errors.push(ValidationIssue::NonContiguousIndices { indices });
    }

    let mut seen = BTreeSet::new();
    for c in &m.claims {
        if c.text.trim().is_empty() {
            report.errors.push(ValidationIssue::EmptyClaimText { claim_id: c.claim_id.clone() });
        }
        if !seen.insert(c.claim_id.as_str()) {
            report.errors.push(ValidationIssue::DuplicateClaimId { claim_id: c.claim_id.clone() });
        }
        if !c.message_id.is_empty() && c.message_id != m.message_id {
            report.errors.push(ValidationIssue::ForeignClaim {
                claim_id: c.claim_id.clone(),
                message_id: c.message_id.clone(),
            });
        }
    }

    if let Some(minimum) = policy.min_hateful_claims {
        if m.hs_label == HsLabel::Hateful && m.claims.len() < minimum {
            report
                .warnings
                .push(ValidationIssue::TooFewClaimsForHateful { count: m.claims.len(), minimum });
        }
    }
    report
}
