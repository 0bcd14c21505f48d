//! Hate speech detection runs and moderation-score fetching.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use loopwright_core::experiment::{
    aggregate_results, cfs_presence, check_consistency, message_prompt, moderation_compare, Condition,
    ConfigError, ExperimentConfig, ModerationScore, ResultTable, RunMetrics, MODERATION_MIN_MEAN,
};
use loopwright_core::metrics::GroupComparison;
use loopwright_core::{CwLabel, HsLabel, Label, MessageRecord, MetricError, ModelRegistry, PromptError};

use crate::dataset::Dataset;
use crate::gateway::{BackendError, Gateway};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageFailure {
    pub model: String,
    pub condition: Condition,
    pub run: usize,
    pub message_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsDetection {
    pub runs: Vec<RunMetrics>,
    pub table: ResultTable,
    pub failures: Vec<MessageFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} claims have no check-worthiness label: {}", .0.len(), .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("result table disagrees with per-run metrics: {0}")]
    Inconsistent(String),
}

/// Classifies every message `runs_per_model` times per model and
/// condition. Messages the gateway cannot label are excluded from that
/// run's scores and listed in `failures`.
pub async fn run_hs_detection(
    cfg: &ExperimentConfig,
    registry: &ModelRegistry,
    gateway: &Gateway,
    dataset: &Dataset,
    cw_labels: &BTreeMap<String, CwLabel>,
) -> Result<HsDetection, ExperimentError> {
    cfg.validate(registry)?;
    if cfg.conditions.contains(&Condition::WithCw) {
        let missing: Vec<String> = dataset
            .claims()
            .filter(|c| !cw_labels.contains_key(&c.claim_id))
            .map(|c| c.claim_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(ExperimentError::MissingLabels(missing));
        }
    }
    let messages = dataset.messages();
    let gold: Vec<HsLabel> = messages.iter().map(|m| m.hs_label).collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();

    for key in &cfg.models {
        let mut spec = registry.get(key).expect("validated").clone();
        if let Some(t) = cfg.temperature {
            spec.temperature = t;
        }
        for &condition in &cfg.conditions {
            let prompts = messages
                .iter()
                .map(|m| message_prompt(m, cw_labels, condition.with_cw()))
                .collect::<Result<Vec<_>, _>>()?;
            for run in 0..cfg.runs_per_model {
                let spec = &spec;
                let seed = cfg.seed;
                let preds: Vec<Result<HsLabel, String>> = stream::iter(messages.iter().zip(&prompts))
                    .map(|(m, prompt)| async move {
                        let item = format!("{seed}/{}/{:?}/{run}", m.message_id, condition);
                        gateway
                            .complete_constrained(spec, prompt, &item, 0)
                            .await
                            .map_err(|e| e.to_string())
                            .and_then(|c| {
                                HsLabel::from_name(&prompt.allowed_outputs[c.index])
                                    .ok_or_else(|| format!("not a hate speech label: {}", c.raw))
                            })
                    })
                    .buffered(spec.max_concurrency.max(1))
                    .collect()
                    .await;
                let mut pred = Vec::with_capacity(preds.len());
                for (m, p) in messages.iter().zip(preds) {
                    match p {
                        Ok(label) => pred.push(Some(label)),
                        Err(error) => {
                            pred.push(None);
                            failures.push(MessageFailure {
                                model: key.clone(),
                                condition,
                                run,
                                message_id: m.message_id.clone(),
                                error,
                            });
                        }
                    }
                }
                runs.push(RunMetrics::score(key, condition, run, &gold, &pred, cfg.max_failure_rate)?);
            }
        }
    }
    let table = aggregate_results(&runs, &cfg.models, registry);
    check_consistency(&table, &runs).map_err(ExperimentError::Inconsistent)?;
    Ok(HsDetection { runs, table, failures })
}

/// Text sent for moderation: the raw message if present, else the claims
/// joined in order.
pub fn moderation_text(m: &MessageRecord) -> String {
    m.raw_text.clone().unwrap_or_else(|| m.reconstructed_text())
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[async_trait]
pub trait ModerationBackend: Send + Sync {
    /// Score per dimension for one text.
    async fn scores(&self, text: &str) -> Result<BTreeMap<String, f64>, BackendError>;
}

/// OpenAI-style moderation endpoint: reads `results[0].category_scores`.
pub struct HttpModeration {
    client: reqwest::Client,
    url: String,
    model: Option<String>,
    api_key_env: Option<String>,
}

impl HttpModeration {
    pub fn new(url: &str, model: Option<String>, api_key_env: Option<String>) -> Self {
        Self { client: reqwest::Client::new(), url: url.into(), model, api_key_env }
    }
}

pub fn category_scores(body: &Value) -> Option<BTreeMap<String, f64>> {
    let scores = body.pointer("/results/0/category_scores")?.as_object()?;
    scores.iter().map(|(k, v)| Some((k.clone(), v.as_f64()?))).collect()
}

#[async_trait]
impl ModerationBackend for HttpModeration {
    async fn scores(&self, text: &str) -> Result<BTreeMap<String, f64>, BackendError> {
        let mut body = serde_json::json!({ "input": text });
        if let Some(m) = &self.model {
            body["model"] = Value::String(m.clone());
        }
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(var) = &self.api_key_env {
            let key = std::env::var(var).map_err(|_| BackendError::Unavailable(format!("{var} is not set")))?;
            builder = builder.bearer_auth(key);
        }
        let unavailable = |e: reqwest::Error| BackendError::Unavailable(e.to_string());
        let response = builder.send().await.map_err(unavailable)?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("{} returned {status}", self.url)));
        }
        let body: Value = response.json().await.map_err(unavailable)?;
        category_scores(&body).ok_or_else(|| BackendError::Unavailable("response has no category_scores".into()))
    }
}

/// One JSON file per text, named by the SHA-256 of the text.
#[derive(Debug, Clone)]
pub struct ModerationCache {
    dir: PathBuf,
}

impl ModerationCache {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path(&self, text: &str) -> PathBuf {
        self.dir.join(format!("{}.json", text_hash(text)))
    }

    pub fn get(&self, text: &str) -> Option<BTreeMap<String, f64>> {
        let bytes = std::fs::read(self.path(text)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, text: &str, scores: &BTreeMap<String, f64>) -> std::io::Result<()> {
        let path = self.path(text);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(scores).expect("scores serialize"))?;
        std::fs::rename(tmp, path)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("moderation failed at message {cursor} ({message_id}): {source}")]
pub struct FetchError {
    /// Scores for messages before `cursor`; these are also cached.
    pub completed: Vec<ModerationScore>,
    /// Index of the first message without scores.
    pub cursor: usize,
    pub message_id: String,
    pub source: BackendError,
}

fn rows<'a>(message_id: &'a str, scores: &'a BTreeMap<String, f64>) -> impl Iterator<Item = ModerationScore> + 'a {
    scores.iter().map(move |(d, s)| ModerationScore {
        message_id: message_id.into(),
        dimension: d.clone(),
        score: *s,
    })
}

/// Scores every message, cache first. Each fresh response is cached as
/// soon as it arrives, so a rerun after a failure only requests the rest.
pub async fn fetch_moderation_scores(
    messages: &[MessageRecord],
    backend: &dyn ModerationBackend,
    cache: &ModerationCache,
    concurrency: usize,
) -> Result<Vec<ModerationScore>, FetchError> {
    let mut results = stream::iter(messages.iter().enumerate())
        .map(|(i, m)| async move {
            let text = moderation_text(m);
            if let Some(hit) = cache.get(&text) {
                return (i, Ok(hit));
            }
            let fetched = backend.scores(&text).await;
            if let Ok(scores) = &fetched {
                // A failed cache write only costs a refetch later.
                let _ = cache.put(&text, scores);
            }
            (i, fetched)
        })
        .buffered(concurrency.max(1));
    let mut out = Vec::new();
    while let Some((i, result)) = results.next().await {
        match result {
            Ok(scores) => out.extend(rows(&messages[i].message_id, &scores)),
            Err(source) => {
                return Err(FetchError {
                    completed: out,
                    cursor: i,
                    message_id: messages[i].message_id.clone(),
                    source,
                })
            }
        }
    }
    Ok(out)
}

/// Group comparison over hateful messages split by CFS presence.
pub fn moderation_table(
    dataset: &Dataset,
    cw_labels: &BTreeMap<String, CwLabel>,
    scores: &[ModerationScore],
) -> Result<Vec<GroupComparison>, MetricError> {
    let groups = cfs_presence(dataset.messages(), cw_labels);
    moderation_compare(&groups, scores, MODERATION_MIN_MEAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn category_scores_shape() {
        let body = json!({"results": [{"category_scores": {"harassment": 0.5, "violence": 0.1}}]});
        let s = category_scores(&body).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s["harassment"], 0.5);
        assert!(category_scores(&json!({"results": []})).is_none());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ModerationCache::new(dir.path()).unwrap();
        assert!(cache.get("x").is_none());
        let scores: BTreeMap<String, f64> = [("a".to_string(), 0.25)].into();
        cache.put("x", &scores).unwrap();
        assert_eq!(cache.get("x"), Some(scores));
        assert!(cache.get("y").is_none());
    }
}
