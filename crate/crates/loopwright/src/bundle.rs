//! Release bundle: aggregated tracks plus every individual annotation and
//! raw model prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use loopwright_core::{ClaimRecord, FinalLabelRecord, MessageRecord, TripleRun};

use crate::dataset::{Dataset, ImportError};
use crate::jsonl::{self, JsonlError, SCHEMA_VERSION};
use crate::state::{AnnotationRow, PlatinumRecord, ProjectState};

pub const MANIFEST_FILE: &str = "manifest.json";

/// File names inside the bundle directory.
pub mod files {
    pub const MESSAGES: &str = "messages.jsonl";
    pub const CLAIMS: &str = "claims.jsonl";
    pub const GOLD: &str = "gold.jsonl";
    pub const PLATINUM: &str = "platinum.jsonl";
    pub const ANNOTATIONS: &str = "annotations.jsonl";
    pub const PREDICTIONS: &str = "predictions.jsonl";
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleCounts {
    pub messages: usize,
    pub claims: usize,
    pub gold: usize,
    pub platinum: usize,
    pub annotations: usize,
    pub predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub schema_version: u32,
    pub counts: BundleCounts,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("gold track incomplete; missing {} claims: {}", .0.len(), .0.join(", "))]
    IncompleteTrack(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.to_path_buf(), source }
}

/// Writes the bundle into `dir`. Output depends only on the project
/// state, so repeated exports are byte-identical.
pub fn export_bundle(dataset: &Dataset, state: &ProjectState, dir: &Path) -> Result<Manifest, ExportError> {
    let missing: Vec<String> = dataset
        .claims()
        .filter(|c| !state.finals.contains_key(&c.claim_id))
        .map(|c| c.claim_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ExportError::IncompleteTrack(missing));
    }
    std::fs::create_dir_all(dir).map_err(io(dir))?;

    let in_claim_order = |a: &str, b: &str| dataset.claim_order(a).cmp(&dataset.claim_order(b));
    let gold: Vec<&FinalLabelRecord> = dataset.claims().filter_map(|c| state.finals.get(&c.claim_id)).collect();
    let platinum_map = state.platinum();
    let platinum: Vec<&PlatinumRecord> = dataset.claims().filter_map(|c| platinum_map.get(&c.claim_id)).collect();
    let predictions: Vec<&TripleRun> = dataset.claims().filter_map(|c| state.triples.get(&c.claim_id)).collect();
    let mut annotations = state.annotations();
    annotations.sort_by(|a, b| {
        in_claim_order(&a.event.claim_id, &b.event.claim_id)
            .then(a.track.cmp(&b.track))
            .then(a.event.source.cmp(&b.event.source))
            .then(a.event.run_index.cmp(&b.event.run_index))
            .then(a.event.prompt_mode.cmp(&b.event.prompt_mode))
    });

    let counts = BundleCounts {
        messages: jsonl::write(&dir.join(files::MESSAGES), "loopwright/messages", dataset.messages())?,
        claims: jsonl::write(&dir.join(files::CLAIMS), "loopwright/claims", dataset.claims())?,
        gold: jsonl::write(&dir.join(files::GOLD), "loopwright/gold", gold)?,
        platinum: jsonl::write(&dir.join(files::PLATINUM), "loopwright/platinum", platinum)?,
        annotations: jsonl::write(&dir.join(files::ANNOTATIONS), "loopwright/annotations", &annotations)?,
        predictions: jsonl::write(&dir.join(files::PREDICTIONS), "loopwright/predictions", predictions)?,
    };
    let manifest = Manifest { format: "loopwright/bundle".into(), schema_version: SCHEMA_VERSION, counts };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dataset: Dataset,
    pub gold: Vec<FinalLabelRecord>,
    pub platinum: Vec<PlatinumRecord>,
    pub annotations: Vec<AnnotationRow>,
    pub predictions: Vec<TripleRun>,
    pub manifest: Manifest,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, BundleError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| BundleError::Manifest { path: path.clone(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| BundleError::Manifest { path, message: e.to_string() })
}

pub fn import_bundle(dir: &Path) -> Result<Bundle, BundleError> {
    let manifest = read_manifest(dir)?;
    let messages: Vec<MessageRecord> = jsonl::read(&dir.join(files::MESSAGES))?;
    Ok(Bundle {
        dataset: Dataset::new(messages)?,
        gold: jsonl::read(&dir.join(files::GOLD))?,
        platinum: jsonl::read(&dir.join(files::PLATINUM))?,
        annotations: jsonl::read(&dir.join(files::ANNOTATIONS))?,
        predictions: jsonl::read(&dir.join(files::PREDICTIONS))?,
        manifest,
    })
}

/// Checks manifest counts against file contents and referential
/// integrity between files. Returns every problem found.
pub fn verify_bundle(dir: &Path) -> Result<Manifest, Vec<String>> {
    let bundle = import_bundle(dir).map_err(|e| vec![e.to_string()])?;
    let claims: Vec<ClaimRecord> = jsonl::read(&dir.join(files::CLAIMS)).map_err(|e| vec![e.to_string()])?;
    let mut problems = Vec::new();

    let actual = BundleCounts {
        messages: bundle.dataset.messages().len(),
        claims: claims.len(),
        gold: bundle.gold.len(),
        platinum: bundle.platinum.len(),
        annotations: bundle.annotations.len(),
        predictions: bundle.predictions.len(),
    };
    if actual != bundle.manifest.counts {
        problems.push(format!("manifest counts {:?} but files hold {:?}", bundle.manifest.counts, actual));
    }

    let nested: BTreeMap<&str, &ClaimRecord> = bundle.dataset.claims().map(|c| (c.claim_id.as_str(), c)).collect();
    let flat: BTreeSet<&str> = claims.iter().map(|c| c.claim_id.as_str()).collect();
    for c in &claims {
        if nested.get(c.claim_id.as_str()) != Some(&c) {
            problems.push(format!("claims file entry {} does not match messages file", c.claim_id));
        }
    }
    for id in nested.keys().filter(|id| !flat.contains(*id)) {
        problems.push(format!("claim {id} missing from claims file"));
    }

    let mut check = |file: &str, id: &str| {
        if !flat.contains(id) {
            problems.push(format!("{file}: unknown claim {id}"));
        }
    };
    for r in &bundle.gold {
        check(files::GOLD, &r.claim_id);
    }
    for r in &bundle.platinum {
        check(files::PLATINUM, &r.claim_id);
    }
    for r in &bundle.annotations {
        check(files::ANNOTATIONS, &r.event.claim_id);
    }
    for r in &bundle.predictions {
        check(files::PREDICTIONS, &r.claim_id);
    }
    let gold: BTreeSet<&str> = bundle.gold.iter().map(|r| r.claim_id.as_str()).collect();
    for id in flat.iter().filter(|id| !gold.contains(*id)) {
        problems.push(format!("{}: no gold label for claim {id}", files::GOLD));
    }

    if problems.is_empty() {
        Ok(bundle.manifest)
    } else {
        Err(problems)
    }
}
