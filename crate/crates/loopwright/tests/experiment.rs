mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use loopwright::dataset::Dataset;
use loopwright::experiment::{
    fetch_moderation_scores, moderation_table, run_hs_detection, ExperimentError, ModerationBackend, ModerationCache,
};
use loopwright::gateway::{BackendError, ChatRequest, FnBackend, Gateway};
use loopwright::report::write_results_csv;
use loopwright_core::experiment::{Condition, ExperimentConfig, Track};
use loopwright_core::prompt::strip_cw_tags;
use loopwright_core::{CwLabel, ModelRegistry, ModelSpec, SizeClass};
use CwLabel::{Cfs, Nfs, Ufs};

/// Four messages of two claims: hateful, non-hateful, hateful, non-hateful.
/// Only m0 and m1 contain a CFS claim.
fn fixture() -> (Dataset, BTreeMap<String, CwLabel>) {
    let dataset = Dataset::new(common::messages(8, 2)).unwrap();
    let labels = [Cfs, Nfs, Ufs, Cfs, Nfs, Ufs, Nfs, Nfs];
    let labels = labels.iter().enumerate().map(|(i, l)| (common::claim_id(i), *l)).collect();
    (dataset, labels)
}

fn registry() -> ModelRegistry {
    ModelRegistry::new(vec![
        ModelSpec::new("flip", SizeClass::Large, "Mock", "mock://a"),
        ModelSpec::new("const", SizeClass::Large, "Mock", "mock://b"),
    ])
    .unwrap()
}

fn config(models: &[&str]) -> ExperimentConfig {
    ExperimentConfig {
        models: models.iter().map(|m| m.to_string()).collect(),
        runs_per_model: 3,
        conditions: vec![Condition::WithCw, Condition::WithoutCw],
        seed: 9,
        cw_track: Track::Gold,
        temperature: Some(0.0),
        max_failure_rate: 0.05,
    }
}

/// Says hateful unless a check-worthy tag is present; `const` always says
/// hateful.
fn flip_gateway(seen: Arc<Mutex<Vec<(String, f64, String)>>>) -> Gateway {
    Gateway::new(Arc::new(FnBackend(move |m: &ModelSpec, r: &ChatRequest| {
        seen.lock().unwrap().push((r.nonce.clone(), r.temperature, r.user_text().to_string()));
        let flip = m.registry_key == "flip" && r.user_text().contains("[Check-worthy Factual]");
        Ok(if flip { "non-hateful" } else { "hateful" }.to_string())
    })))
}

#[tokio::test]
async fn delta_f1_matches_hand_computation() {
    let (dataset, labels) = fixture();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let gw = flip_gateway(seen.clone());
    let out = run_hs_detection(&config(&["flip", "const"]), &registry(), &gw, &dataset, &labels).await.unwrap();

    // Without tags: all hateful against gold H,N,H,N. Hateful P=1/2 R=1
    // F1=2/3, non-hateful scores 0, macro F1 = 1/3.
    // With tags: N,N,H,H. Each class P=R=F1=1/2, macro F1 = 1/2.
    let oracle_without = (2.0 / 3.0 + 0.0) / 2.0;
    let oracle_with = (0.5 + 0.5) / 2.0;
    let flip = &out.table.rows[0];
    assert_eq!(flip.label, "flip");
    assert!((flip.delta_f1().unwrap() - (oracle_with - oracle_without)).abs() < 1e-12);
    assert!((flip.without_cw.unwrap().precision.mean - 0.25).abs() < 1e-12);
    assert!((flip.without_cw.unwrap().recall.mean - 0.5).abs() < 1e-12);
    assert_eq!(out.table.rows[1].delta_f1(), Some(0.0));
    for row in &out.table.rows {
        for c in [row.with_cw.unwrap(), row.without_cw.unwrap()] {
            assert_eq!((c.precision.std, c.recall.std, c.f1.std), (0.0, 0.0, 0.0));
        }
    }
    let avg = &out.table.rows[2];
    assert_eq!(avg.label, "Avg Large");
    assert!((avg.delta_f1().unwrap() - (oracle_with - oracle_without) / 2.0).abs() < 1e-12);
    assert_eq!(out.runs.len(), 12);
    assert!(out.failures.is_empty());

    let mut csv = Vec::new();
    write_results_csv(&mut csv, &out.table, &out.runs).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "Model,w/ check-worthiness P,w/ check-worthiness R,w/ check-worthiness F1,w/o check-worthiness P,w/o check-worthiness R,w/o check-worthiness F1,ΔF1"
    );
    assert_eq!(
        lines[1],
        "flip,0.500 ± 0.000,0.500 ± 0.000,0.500 ± 0.000,0.250 ± 0.000,0.500 ± 0.000,0.333 ± 0.000,+0.167"
    );

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2 * 2 * 3 * 4);
    assert!(seen.iter().all(|(_, t, _)| *t == 0.0));
    // Condition isolation: stripping the tags gives the untagged text.
    for (nonce, _, text) in seen.iter().filter(|(n, _, _)| n.contains("WithCw")) {
        let twin = nonce.replace("WithCw", "WithoutCw");
        let plain = &seen.iter().find(|(n, _, _)| *n == twin).unwrap().2;
        assert_eq!(&strip_cw_tags(text), plain);
        assert!(!plain.contains("[/"));
    }
}

#[tokio::test]
async fn failed_messages_are_excluded_and_counted() {
    let (dataset, labels) = fixture();
    let gw = Gateway::new(Arc::new(FnBackend(|_: &ModelSpec, r: &ChatRequest| {
        if r.user_text().contains("claim number 6") {
            Err(BackendError::Unavailable("timeout".into()))
        } else {
            Ok("hateful".to_string())
        }
    })));
    let mut cfg = config(&["const"]);
    cfg.runs_per_model = 1;
    let out = run_hs_detection(&cfg, &registry(), &gw, &dataset, &labels).await.unwrap();
    assert_eq!(out.failures.len(), 2);
    assert!(out.runs.iter().all(|r| r.failures == 1 && r.evaluated == 3 && r.invalid));
    let cell = out.table.rows[0].with_cw.unwrap();
    assert_eq!((cell.valid_runs, cell.invalid_runs), (0, 1));
}

#[tokio::test]
async fn missing_cw_labels_are_refused() {
    let (dataset, mut labels) = fixture();
    labels.remove(&common::claim_id(3));
    let gw = flip_gateway(Arc::default());
    let err = run_hs_detection(&config(&["flip"]), &registry(), &gw, &dataset, &labels).await.unwrap_err();
    assert!(matches!(err, ExperimentError::MissingLabels(ref ids) if ids == &[common::claim_id(3)]));
    let mut cfg = config(&["flip"]);
    cfg.conditions = vec![Condition::WithoutCw];
    run_hs_detection(&cfg, &registry(), &gw, &dataset, &labels).await.unwrap();
}

const DIMENSIONS: [&str; 21] = [
    "harassment", "harassment/threatening", "harassment_threatening", "hate", "hate/threatening",
    "hate_threatening", "illicit", "illicit/violent", "illicit_violent", "self-harm", "self-harm/instructions",
    "self-harm/intent", "self_harm", "self_harm_instructions", "self_harm_intent", "sexual", "sexual/minors",
    "sexual_minors", "violence", "violence/graphic", "violence_graphic",
];

struct FakeModeration {
    calls: AtomicUsize,
    fail_on: Option<String>,
}

#[async_trait::async_trait]
impl ModerationBackend for FakeModeration {
    async fn scores(&self, text: &str) -> Result<BTreeMap<String, f64>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_on.as_deref().is_some_and(|f| text.contains(f)) {
            return Err(BackendError::Unavailable("503".into()));
        }
        let base = if text.contains("claim number 0") { 0.9 } else { 0.3 };
        Ok(DIMENSIONS.iter().map(|d| (d.to_string(), if d.starts_with("harass") { base } else { 0.01 })).collect())
    }
}

#[tokio::test]
async fn moderation_fetch_caches_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ModerationCache::new(dir.path()).unwrap();
    let (dataset, labels) = fixture();
    let msgs = dataset.messages();

    let failing = FakeModeration { calls: AtomicUsize::new(0), fail_on: Some("claim number 4".into()) };
    let err = fetch_moderation_scores(msgs, &failing, &cache, 1).await.unwrap_err();
    assert_eq!(err.cursor, 2);
    assert_eq!(err.message_id, "m0002");
    assert_eq!(err.completed.len(), 2 * 21);
    assert_eq!(failing.calls.load(Ordering::SeqCst), 3);

    let ok = FakeModeration { calls: AtomicUsize::new(0), fail_on: None };
    let scores = fetch_moderation_scores(msgs, &ok, &cache, 1).await.unwrap();
    assert_eq!(ok.calls.load(Ordering::SeqCst), 2);
    assert_eq!(scores.len(), 4 * 21);
    assert_eq!(scores.iter().filter(|s| s.message_id == "m0000").count(), 21);

    let again = FakeModeration { calls: AtomicUsize::new(0), fail_on: None };
    assert_eq!(fetch_moderation_scores(msgs, &again, &cache, 4).await.unwrap(), scores);
    assert_eq!(again.calls.load(Ordering::SeqCst), 0);

    // Hateful messages m0 (has CFS) and m2 (none); only the harassment
    // dimensions clear the mean filter.
    let rows = moderation_table(&dataset, &labels, &scores).unwrap();
    let dims: Vec<&str> = rows.iter().map(|r| r.dimension.as_str()).collect();
    assert_eq!(dims, ["harassment", "harassment/threatening", "harassment_threatening"]);
    assert_eq!((rows[0].n_a, rows[0].n_b), (1, 1));
    assert_eq!((rows[0].mean_a, rows[0].mean_b), (0.3, 0.9));
    assert_eq!(rows[0].effect_size_r, 1.0);
}
