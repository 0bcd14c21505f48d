//! Classification prompts and constrained-output parsing.
//!
//! Prompt construction is pure: identical inputs give byte-identical
//! bundles, which is what makes recorded runs replayable.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::PromptError;
use crate::label::{CwLabel, HsLabel, Label};
use crate::record::PromptMode;

pub const CW_SYSTEM_PROMPT: &str = "You are an expert annotator that classifies text based on their check-worthiness. Always follow the definitions exactly.";

const CW_INSTRUCTION: &str = "Classify the following text into one of these categories:";

const NFS_DEFINITION: &str = "1.Non-Factual: Subjective text such as opinions, beliefs, declarations, or wishes. Many questions also fall into this category. These sentences do not contain any factual claim.";
const UFS_DEFINITION: &str = "2.Unimportant Factual: Text that contain factual claims but are not important for fact-checking. The general public would not be interested in verifying them.";
const CFS_DEFINITION: &str = "3.Check-worthy Factual: Text that contain factual claims of public interest. These are the kinds of claims journalists would fact-check.";

/// Fixed one-shot exemplars, one per class, shared by every claim.
pub const CFS_EXAMPLE: &str = "92% of abortion clinics are in black communities.";
pub const UFS_EXAMPLE: &str =
    "When I was last in South Africa, we went to Sun City and saw little black monkey children swimming.";
pub const NFS_EXAMPLE: &str =
    "We should go to the southwest and go on the offensive and drive every race down into Mexico.";

pub const HS_SYSTEM_PROMPT: &str = "You are an expert model for detecting hate speech in text messages based on the following definition of hate speech: Hate speech is considered any kind of content that conveys malevolent intentions toward a group or an individual, and motivated by inherent characteristics that are attributed to that group and shared among its members such as race, color, ethnicity, gender, sexual orientation, nationality, religion, disability, social status, health conditions, or other characteristics.";

const HS_INSTRUCTION: &str = "Given this message. Classify if it is either hateful or not.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    CheckWorthiness,
    HateSpeech,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub allowed_outputs: Vec<String>,
    pub task_kind: TaskKind,
}

impl PromptBundle {
    pub fn new(
        system_text: String,
        user_text: String,
        allowed_outputs: Vec<String>,
        task_kind: TaskKind,
    ) -> Result<Self, PromptError> {
        check_allowed(&allowed_outputs)?;
        Ok(Self { system_text, user_text, allowed_outputs, task_kind })
    }

    /// Parses a raw model output against this bundle's label list.
    pub fn parse(&self, raw: &str) -> Result<usize, PromptError> {
        parse_label(raw, &self.allowed_outputs)
    }
}

fn check_allowed(allowed: &[String]) -> Result<(), PromptError> {
    if allowed.is_empty() {
        return Err(PromptError::InvalidAllowedOutputs);
    }
    for (i, a) in allowed.iter().enumerate() {
        if allowed[..i].iter().any(|b| fold(b) == fold(a)) {
            return Err(PromptError::InvalidAllowedOutputs);
        }
    }
    Ok(())
}

pub fn cw_allowed_outputs() -> Vec<String> {
    CwLabel::PROMPT_ORDER.iter().map(|l| l.name().to_string()).collect()
}

pub fn hs_allowed_outputs() -> Vec<String> {
    HsLabel::ALL.iter().map(|l| l.name().to_string()).collect()
}

/// Check-worthiness prompt for a single claim. In one-shot mode each class
/// definition is followed by its fixed exemplar.
pub fn build_cw_prompt(claim_text: &str, mode: PromptMode) -> Result<PromptBundle, PromptError> {
    if claim_text.trim().is_empty() {
        return Err(PromptError::EmptyInput);
    }
    let one_shot = match mode {
        PromptMode::ZeroShot => false,
        PromptMode::OneShot => true,
        // Not a model prompting mode; treat as zero-shot text.
        PromptMode::NotApplicable => false,
    };

    let mut user = String::new();
    user.push_str(CW_INSTRUCTION);
    for (definition, example) in [
        (NFS_DEFINITION, NFS_EXAMPLE),
        (UFS_DEFINITION, UFS_EXAMPLE),
        (CFS_DEFINITION, CFS_EXAMPLE),
    ] {
        user.push('\n');
        user.push_str(definition);
        if one_shot {
            user.push_str(" Example: \"");
            user.push_str(example);
            user.push('"');
        }
    }
    user.push_str("\nInput text: '");
    user.push_str(claim_text);
    user.push('\'');

    PromptBundle::new(CW_SYSTEM_PROMPT.to_string(), user, cw_allowed_outputs(), TaskKind::CheckWorthiness)
}

fn open_tag(label: CwLabel) -> String {
    format!("[{}]", label.name())
}

fn close_tag(label: CwLabel) -> String {
    format!("[/{}]", label.name())
}

/// Joins claim texts with single spaces; with `with_cw` every claim is
/// wrapped as `[<Label>] text [/<Label>]`.
pub fn wrap_claims(claims: &[(&str, Option<CwLabel>)], with_cw: bool) -> Result<String, PromptError> {
    if claims.is_empty() {
        return Err(PromptError::EmptyInput);
    }
    let mut parts = Vec::with_capacity(claims.len());
    for (pos, (text, label)) in claims.iter().enumerate() {
        if with_cw {
            let label = label.ok_or(PromptError::MissingCwLabel(pos))?;
            parts.push(format!("{} {} {}", open_tag(label), text, close_tag(label)));
        } else {
            parts.push((*text).to_string());
        }
    }
    Ok(parts.join(" "))
}

/// Removes every `[<Label>] ` opening and ` [/<Label>]` closing tag, undoing
/// [`wrap_claims`].
pub fn strip_cw_tags(text: &str) -> String {
    let mut out = text.to_string();
    for label in CwLabel::ALL {
        out = out.replace(&format!("{} ", open_tag(*label)), "");
        out = out.replace(&format!(" {}", close_tag(*label)), "");
    }
    out
}

/// True when the text contains any opening or closing check-worthiness tag.
pub fn contains_cw_tags(text: &str) -> bool {
    CwLabel::ALL
        .iter()
        .any(|l| text.contains(&open_tag(*l)) || text.contains(&close_tag(*l)))
}

/// Hate speech prompt over a message given as its ordered claims.
pub fn build_hs_prompt(claims: &[(&str, Option<CwLabel>)], with_cw: bool) -> Result<PromptBundle, PromptError> {
    if claims.iter().all(|(t, _)| t.trim().is_empty()) {
        return Err(PromptError::EmptyInput);
    }
    let input = wrap_claims(claims, with_cw)?;
    let user = format!("{HS_INSTRUCTION}\nInput: {input}");
    PromptBundle::new(HS_SYSTEM_PROMPT.to_string(), user, hs_allowed_outputs(), TaskKind::HateSpeech)
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Index of the allowed entry equal to `raw` after trimming and
/// case-folding. No substring matching.
pub fn parse_label(raw: &str, allowed: &[String]) -> Result<usize, PromptError> {
    if allowed.is_empty() {
        return Err(PromptError::InvalidAllowedOutputs);
    }
    let needle = fold(raw);
    let mut hits = allowed.iter().enumerate().filter(|(_, a)| fold(a) == needle);
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => Ok(i),
        _ => Err(PromptError::InvalidModelOutput(raw.to_string())),
    }
}

/// Parses a check-worthiness output.
pub fn parse_cw_output(raw: &str) -> Result<CwLabel, PromptError> {
    let i = parse_label(raw, &cw_allowed_outputs())?;
    Ok(CwLabel::PROMPT_ORDER[i])
}

/// Parses a hate speech output.
pub fn parse_hs_output(raw: &str) -> Result<HsLabel, PromptError> {
    let i = parse_label(raw, &hs_allowed_outputs())?;
    Ok(HsLabel::ALL[i])
}
