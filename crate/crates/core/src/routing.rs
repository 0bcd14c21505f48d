//! Majority voting, disagreement routing, blind judge cases and
//! adjudication precedence.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::RoutingError;
use crate::label::CwLabel;
use crate::record::{PromptMode, ProvenanceCategory};

/// Three LLM labels for one claim under one (model, prompt mode).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRun {
    pub claim_id: String,
    pub model: String,
    pub prompt_mode: PromptMode,
    pub labels: [CwLabel; 3],
    pub raw_outputs: [String; 3],
    /// Invalid outputs discarded per slot before the accepted one.
    #[serde(default)]
    pub retries: [u32; 3],
}

impl TripleRun {
    pub fn majority(&self) -> Option<CwLabel> {
        majority_vote(&self.labels)
    }

    pub fn variability(&self) -> VariabilityClass {
        classify_variability(&self.labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariabilityClass {
    AllEqual,
    TwoEqual,
    Unequal,
}

impl VariabilityClass {
    pub const ALL: [VariabilityClass; 3] =
        [VariabilityClass::AllEqual, VariabilityClass::TwoEqual, VariabilityClass::Unequal];

    pub fn column_name(self) -> &'static str {
        match self {
            VariabilityClass::AllEqual => "all equal",
            VariabilityClass::TwoEqual => "2 equal",
            VariabilityClass::Unequal => "unequal",
        }
    }
}

/// The label occurring at least twice, if any.
pub fn majority_vote(labels: &[CwLabel; 3]) -> Option<CwLabel> {
    let [a, b, c] = *labels;
    if a == b || a == c {
        Some(a)
    } else if b == c {
        Some(b)
    } else {
        None
    }
}

pub fn classify_variability(labels: &[CwLabel; 3]) -> VariabilityClass {
    let [a, b, c] = *labels;
    match (a == b, b == c, a == c) {
        (true, true, _) => VariabilityClass::AllEqual,
        (false, false, false) => VariabilityClass::Unequal,
        _ => VariabilityClass::TwoEqual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeedsJudgeReason {
    /// All three LLM runs differ.
    NoMajority,
    /// The LLM majority differs from the human label.
    Conflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RoutingDecision {
    Accepted { label: CwLabel },
    NeedsJudge { reason: NeedsJudgeReason },
}

impl RoutingDecision {
    pub fn needs_judge(&self) -> bool {
        matches!(self, RoutingDecision::NeedsJudge { .. })
    }
}

pub fn reconcile(human: CwLabel, triple: &[CwLabel; 3]) -> RoutingDecision {
    match majority_vote(triple) {
        Some(m) if m == human => RoutingDecision::Accepted { label: human },
        Some(_) => RoutingDecision::NeedsJudge { reason: NeedsJudgeReason::Conflict },
        None => RoutingDecision::NeedsJudge { reason: NeedsJudgeReason::NoMajority },
    }
}

/// Per-claim seed from the project seed. Stable across platforms and runs.
pub fn claim_seed(project_seed: u64, claim_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(project_seed.to_le_bytes());
    hasher.update(claim_id.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// What a judge sees. Carries no annotator identity; the order of two
/// presented labels is a seeded coin flip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeCase {
    pub claim_id: String,
    pub claim_text: String,
    pub presented_labels: Vec<CwLabel>,
    pub permutation_seed: u64,
    pub sources_hidden: bool,
}

pub fn make_judge_case(
    claim_id: &str,
    claim_text: &str,
    human: CwLabel,
    llm_majority: Option<CwLabel>,
    seed: u64,
) -> Result<JudgeCase, RoutingError> {
    let presented_labels = match llm_majority {
        Some(llm) if llm == human => {
            return Err(RoutingError::InconsistentCase { claim_id: claim_id.into() })
        }
        Some(llm) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if rng.random_bool(0.5) {
                vec![llm, human]
            } else {
                vec![human, llm]
            }
        }
        None => vec![human],
    };
    Ok(JudgeCase {
        claim_id: claim_id.into(),
        claim_text: claim_text.into(),
        presented_labels,
        permutation_seed: seed,
        sources_hidden: true,
    })
}

/// Final label for one claim. `gold` comes from the LLM-in-the-loop track,
/// `platinum` from the fully human one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalLabelRecord {
    pub claim_id: String,
    pub gold: CwLabel,
    pub provenance: ProvenanceCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platinum: Option<CwLabel>,
}

impl FinalLabelRecord {
    pub fn accepted(claim_id: &str, label: CwLabel) -> Self {
        Self {
            claim_id: claim_id.into(),
            gold: label,
            provenance: ProvenanceCategory::Accepted,
            platinum: None,
        }
    }
}

/// The judge's label is always final; provenance records how it relates to
/// the labels that were on the table.
pub fn adjudicate(
    case: &JudgeCase,
    human: CwLabel,
    llm_majority: Option<CwLabel>,
    judge: CwLabel,
) -> Result<FinalLabelRecord, RoutingError> {
    let mut expected: Vec<CwLabel> = match llm_majority {
        Some(llm) if llm == human => {
            return Err(RoutingError::InconsistentCase { claim_id: case.claim_id.clone() })
        }
        Some(llm) => vec![human, llm],
        None => vec![human],
    };
    let mut presented = case.presented_labels.clone();
    expected.sort();
    presented.sort();
    if expected != presented {
        return Err(RoutingError::CaseMismatch { claim_id: case.claim_id.clone() });
    }

    let provenance = match llm_majority {
        Some(_) if judge == human => ProvenanceCategory::JudgeSidedHuman,
        Some(llm) if judge == llm => ProvenanceCategory::JudgeSidedLlm,
        Some(_) => ProvenanceCategory::JudgeOverride,
        None if judge == human => ProvenanceCategory::JudgeSidedHuman,
        None => ProvenanceCategory::JudgeIndependent,
    };
    Ok(FinalLabelRecord {
        claim_id: case.claim_id.clone(),
        gold: judge,
        provenance,
        platinum: None,
    })
}

/// Majority over three human annotators; `None` sends the claim to a
/// fourth annotator.
pub fn aggregate_platinum(labels: &[CwLabel; 3]) -> Option<CwLabel> {
    majority_vote(labels)
}
