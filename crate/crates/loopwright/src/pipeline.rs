//! Batch driver: sample triples, reconcile with first-annotator labels,
//! open judge cases, apply judge decisions. Resumable from the event log.

use std::collections::BTreeMap;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use loopwright_core::metrics::VariabilityTable;
use loopwright_core::{
    build_cw_prompt, AnnotationEvent, EffortReport, FinalLabelRecord, ModelSpec, PromptMode, RoutingDecision,
    TripleRun,
};

use crate::eventlog::Event;
use crate::gateway::Gateway;
use crate::project::{ProjectError, SharedProject};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub model: ModelSpec,
    pub mode: PromptMode,
    /// Sample at most this many claims in this invocation.
    pub max_claims: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimFailure {
    pub claim_id: String,
    pub error: String,
}

/// Everything here derives from persisted state, so re-running a finished
/// project yields the same report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub model: String,
    pub prompt_mode: PromptMode,
    pub total_claims: usize,
    pub triples: Vec<TripleRun>,
    pub decisions: BTreeMap<String, RoutingDecision>,
    pub finals: Vec<FinalLabelRecord>,
    pub variability: VariabilityTable,
    pub effort: EffortReport,
    pub failures: Vec<ClaimFailure>,
    pub awaiting_human: Vec<String>,
    pub awaiting_judge: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    /// Claims sent to the model in this invocation.
    pub sampled: usize,
    /// Supplied labels that were not used, with the reason.
    pub skipped_labels: Vec<ClaimFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error("project is bound to {bound_model} ({bound_mode:?}); refusing to mix in {model} ({mode:?})")]
    RunMismatch { bound_model: String, bound_mode: PromptMode, model: String, mode: PromptMode },
}

fn lock(project: &SharedProject) -> std::sync::MutexGuard<'_, crate::project::Project> {
    project.lock().expect("project lock poisoned")
}

/// Runs or resumes the pipeline. `humans` and `judges` are batch labels;
/// ones already recorded are skipped. Claims lacking a human or judge
/// label stay pending for the annotation service.
pub async fn run_pipeline(
    project: &SharedProject,
    gateway: &Gateway,
    humans: &[AnnotationEvent],
    judges: &[AnnotationEvent],
    options: &PipelineOptions,
) -> Result<PipelineOutcome, PipelineError> {
    let model = options.model.registry_key.clone();
    let mut skipped = Vec::new();
    let pending: Vec<(String, String)> = {
        let mut p = lock(project);
        match p.state().run.clone() {
            Some((bound_model, bound_mode)) if bound_model != model || bound_mode != options.mode => {
                return Err(PipelineError::RunMismatch { bound_model, bound_mode, model, mode: options.mode });
            }
            Some(_) => {}
            None => p.append(vec![Event::RunStarted { model: model.clone(), prompt_mode: options.mode }])?,
        }
        for h in humans {
            if p.state().human.contains_key(&h.claim_id) {
                continue;
            }
            if let Err(e) = p.record_human(h.clone()) {
                skipped.push(ClaimFailure { claim_id: h.claim_id.clone(), error: e.to_string() });
            }
        }
        let state = p.state();
        let mut todo: Vec<(String, String)> = p
            .dataset()
            .claims()
            .filter(|c| !state.triples.contains_key(&c.claim_id))
            .map(|c| (c.claim_id.clone(), c.text.clone()))
            .collect();
        if let Some(n) = options.max_claims {
            todo.truncate(n);
        }
        todo
    };

    let sampled = pending.len();
    let concurrency = options.model.max_concurrency.max(1);
    let mut results = stream::iter(pending)
        .map(|(claim_id, text)| async move {
            let outcome = match build_cw_prompt(&text, options.mode) {
                Ok(prompt) => gateway
                    .sample_triple(&options.model, &prompt, &claim_id, options.mode)
                    .await
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            (claim_id, outcome)
        })
        .buffered(concurrency);

    // `buffered` yields in input order, so the log order is deterministic.
    while let Some((claim_id, outcome)) = results.next().await {
        let mut p = lock(project);
        let at = p.now();
        match outcome {
            Ok(run) => {
                p.append(vec![Event::Triple { run, at }])?;
                p.advance(&claim_id)?;
            }
            Err(error) => p.append(vec![Event::Failed { claim_id, model: model.clone(), error, at }])?,
        }
    }

    let mut p = lock(project);
    let ids: Vec<String> = p.dataset().claims().map(|c| c.claim_id.clone()).collect();
    for id in &ids {
        p.advance(id)?;
    }
    for j in judges {
        if p.state().finals.contains_key(&j.claim_id) {
            continue;
        }
        if let Err(e) = p.record_judge(j.clone()) {
            skipped.push(ClaimFailure { claim_id: j.claim_id.clone(), error: e.to_string() });
        }
    }
    Ok(PipelineOutcome { report: report(&p), sampled, skipped_labels: skipped })
}

pub fn report(p: &crate::project::Project) -> PipelineReport {
    let state = p.state();
    let (model, prompt_mode) = state.run.clone().unwrap_or_else(|| (String::new(), PromptMode::NotApplicable));
    let in_order = |map_has: &dyn Fn(&str) -> bool| -> Vec<String> {
        p.dataset().claims().filter(|c| map_has(&c.claim_id)).map(|c| c.claim_id.clone()).collect()
    };
    PipelineReport {
        model,
        prompt_mode,
        total_claims: p.dataset().claim_count(),
        triples: p.dataset().claims().filter_map(|c| state.triples.get(&c.claim_id).cloned()).collect(),
        decisions: state.decisions.clone(),
        finals: p.dataset().claims().filter_map(|c| state.finals.get(&c.claim_id).cloned()).collect(),
        variability: p.variability(),
        effort: p.effort(),
        failures: p
            .dataset()
            .claims()
            .filter_map(|c| {
                state.failures.get(&c.claim_id).map(|e| ClaimFailure { claim_id: c.claim_id.clone(), error: e.clone() })
            })
            .collect(),
        awaiting_human: in_order(&|id| !state.human.contains_key(id)),
        awaiting_judge: in_order(&|id| state.cases.contains_key(id) && !state.finals.contains_key(id)),
    }
}
