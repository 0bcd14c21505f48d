//! Corpus import.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value;

use loopwright_core::record::{validate_message_with, ClaimRecord, MessageRecord, ValidationPolicy};
use loopwright_core::HsLabel;

use crate::jsonl::{self, JsonlError};

/// Messages sorted by id, claims inside each message sorted by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    messages: Vec<MessageRecord>,
    claim_pos: BTreeMap<String, (usize, usize)>,
}

impl Dataset {
    /// Normalizes ordering and fills in each claim's `message_id`.
    pub fn new(mut messages: Vec<MessageRecord>) -> Result<Self, ImportError> {
        messages.sort_by(|a, b| a.message_id.cmp(&b.message_id));
        for pair in messages.windows(2) {
            if pair[0].message_id == pair[1].message_id {
                return Err(ImportError::DuplicateMessage(pair[0].message_id.clone()));
            }
        }
        let mut claim_pos = BTreeMap::new();
        for (mi, m) in messages.iter_mut().enumerate() {
            m.claims.sort_by_key(|c| c.index);
            for (ci, c) in m.claims.iter_mut().enumerate() {
                c.message_id = m.message_id.clone();
                if claim_pos.insert(c.claim_id.clone(), (mi, ci)).is_some() {
                    return Err(ImportError::DuplicateClaim(c.claim_id.clone()));
                }
            }
        }
        Ok(Self { messages, claim_pos })
    }

    pub fn messages(&self) -> &[MessageRecord] {
        &self.messages
    }

    /// All claims in message order, then index order.
    pub fn claims(&self) -> impl Iterator<Item = &ClaimRecord> {
        self.messages.iter().flat_map(|m| m.claims.iter())
    }

    pub fn claim_count(&self) -> usize {
        self.claim_pos.len()
    }

    pub fn claim(&self, claim_id: &str) -> Option<&ClaimRecord> {
        let (m, c) = *self.claim_pos.get(claim_id)?;
        Some(&self.messages[m].claims[c])
    }

    pub fn message_of(&self, claim_id: &str) -> Option<&MessageRecord> {
        let (m, _) = *self.claim_pos.get(claim_id)?;
        Some(&self.messages[m])
    }

    /// Sort key for claim-ordered output.
    pub fn claim_order(&self, claim_id: &str) -> (usize, usize) {
        self.claim_pos.get(claim_id).copied().unwrap_or((usize::MAX, usize::MAX))
    }

    /// Claim id to the HS stratum of its message.
    pub fn strata(&self) -> BTreeMap<String, String> {
        self.claims()
            .map(|c| {
                let hs = self.message_of(&c.claim_id).map_or(HsLabel::NonHateful, |m| m.hs_label);
                (c.claim_id.clone(), hs.stratum().to_string())
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field {field:?} is on the metadata deny-list")]
    DeniedField { line: usize, field: String },
    #[error("message {message_id}: {}", issues.join("; "))]
    Validation { message_id: String, issues: Vec<String> },
    #[error("duplicate message id {0}")]
    DuplicateMessage(String),
    #[error("duplicate claim id {0}")]
    DuplicateClaim(String),
}

impl From<JsonlError> for ImportError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io { path, source } => ImportError::Io { path: path.display().to_string(), source },
            JsonlError::Parse { line, message, .. } => ImportError::Parse { line, message },
        }
    }
}

pub const DEFAULT_DENY_FIELDS: &[&str] =
    &["username", "user_name", "user_id", "author", "screen_name", "url", "urls", "email"];

#[derive(Debug, Clone)]
pub struct ImportOptions {
    /// Keys that must not appear anywhere in a record.
    pub deny_fields: Vec<String>,
    pub policy: ValidationPolicy,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            deny_fields: DEFAULT_DENY_FIELDS.iter().map(|s| s.to_string()).collect(),
            policy: ValidationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImportReport {
    pub dataset: Dataset,
    /// `message_id: warning` lines.
    pub warnings: Vec<String>,
}

fn find_denied(value: &Value, deny: &BTreeSet<&str>) -> Option<String> {
    match value {
        Value::Object(map) => map.iter().find_map(|(k, v)| {
            if deny.contains(k.to_lowercase().as_str()) {
                Some(k.clone())
            } else {
                find_denied(v, deny)
            }
        }),
        Value::Array(items) => items.iter().find_map(|v| find_denied(v, deny)),
        _ => None,
    }
}

/// Reads a messages JSONL file and validates every message.
pub fn import_corpus(path: &Path, options: &ImportOptions) -> Result<ImportReport, ImportError> {
    let (_, values) = jsonl::read_values(path)?;
    let deny: BTreeSet<&str> = options.deny_fields.iter().map(String::as_str).collect();
    let mut messages = Vec::with_capacity(values.len());
    for (line, value) in values {
        if let Some(field) = find_denied(&value, &deny) {
            return Err(ImportError::DeniedField { line, field });
        }
        let m: MessageRecord = jsonl::parse_value(path, line, value)?;
        messages.push(m);
    }
    let mut warnings = Vec::new();
    for m in &messages {
        let report = validate_message_with(m, &options.policy);
        if !report.is_valid() {
            return Err(ImportError::Validation {
                message_id: m.message_id.clone(),
                issues: report.errors.iter().map(|e| e.to_string()).collect(),
            });
        }
        warnings.extend(report.warnings.iter().map(|w| format!("{}: {w}", m.message_id)));
    }
    Ok(ImportReport { dataset: Dataset::new(messages)?, warnings })
}
