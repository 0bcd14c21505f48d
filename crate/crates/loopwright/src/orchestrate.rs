//! Turns project state into the next routing and adjudication events.

use std::collections::BTreeMap;

use loopwright_core::{
    adjudicate, claim_seed, make_judge_case, reconcile, AnnotationEvent, FinalLabelRecord, RoutingDecision,
    RoutingError,
};

use crate::dataset::Dataset;
use crate::eventlog::Event;
use crate::state::ProjectState;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrchestrateError {
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("claim {0} has no open judge case")]
    NoOpenCase(String),
    #[error("claim {0} already has a final label")]
    AlreadyFinal(String),
    #[error("claim {0} already has a first-annotator label")]
    AlreadyAnnotated(String),
    #[error("unknown claim {0}")]
    UnknownClaim(String),
}

/// Routing events that follow once a claim has both a human label and a
/// triple: an accepted final, or an opened judge case.
pub fn advance(
    state: &ProjectState,
    claim_id: &str,
    claim_text: &str,
    project_seed: u64,
) -> Result<Vec<Event>, OrchestrateError> {
    if state.decisions.contains_key(claim_id) {
        return Ok(Vec::new());
    }
    let (Some(human), Some(triple)) = (state.human_label(claim_id), state.triples.get(claim_id)) else {
        return Ok(Vec::new());
    };
    let decision = reconcile(human, &triple.labels);
    let mut events = vec![Event::Routed { claim_id: claim_id.into(), decision }];
    match decision {
        RoutingDecision::Accepted { label } => {
            events.push(Event::Final { record: FinalLabelRecord::accepted(claim_id, label) });
        }
        RoutingDecision::NeedsJudge { .. } => {
            let seed = claim_seed(project_seed, claim_id);
            let case = make_judge_case(claim_id, claim_text, human, triple.majority(), seed)?;
            events.push(Event::JudgeCaseOpened { case });
        }
    }
    Ok(events)
}

/// A first-annotator label followed by whatever routing it unblocks.
pub fn human_events(
    state: &ProjectState,
    annotation: AnnotationEvent,
    claim_text: &str,
    project_seed: u64,
) -> Result<Vec<Event>, OrchestrateError> {
    if state.human.contains_key(&annotation.claim_id) {
        return Err(OrchestrateError::AlreadyAnnotated(annotation.claim_id));
    }
    let claim_id = annotation.claim_id.clone();
    let mut next = state.clone();
    let first = Event::Human { annotation };
    next.apply(&first);
    let mut events = vec![first];
    events.extend(advance(&next, &claim_id, claim_text, project_seed)?);
    Ok(events)
}

/// The judge's label and the resulting final record.
pub fn judge_events(state: &ProjectState, annotation: AnnotationEvent) -> Result<Vec<Event>, OrchestrateError> {
    let id = annotation.claim_id.clone();
    if state.finals.contains_key(&id) {
        return Err(OrchestrateError::AlreadyFinal(id));
    }
    let case = state.cases.get(&id).ok_or_else(|| OrchestrateError::NoOpenCase(id.clone()))?;
    let human = state.human_label(&id).ok_or_else(|| OrchestrateError::NoOpenCase(id.clone()))?;
    let llm = state.triples.get(&id).and_then(|t| t.majority());
    let record = adjudicate(case, human, llm, annotation.label)?;
    Ok(vec![Event::Judge { annotation }, Event::Final { record }])
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Orchestrate(#[from] OrchestrateError),
    #[error("claim {0}: recomputed judge case differs from the logged one")]
    CaseDiverged(String),
}

/// Recomputes every final label from the raw inputs in the log (human
/// labels, model triples, judge labels), ignoring the logged routing.
pub fn replay_finals(
    events: &[Event],
    dataset: &Dataset,
    project_seed: u64,
) -> Result<BTreeMap<String, FinalLabelRecord>, ReplayError> {
    let logged = ProjectState::fold(events);
    let inputs: Vec<Event> = events
        .iter()
        .filter(|e| matches!(e, Event::Human { .. } | Event::Triple { .. } | Event::RunStarted { .. }))
        .cloned()
        .collect();
    let mut state = ProjectState::fold(&inputs);
    for claim in dataset.claims() {
        for e in advance(&state, &claim.claim_id, &claim.text, project_seed)? {
            if let Event::JudgeCaseOpened { case } = &e {
                if logged.cases.get(&claim.claim_id).is_some_and(|c| c != case) {
                    return Err(ReplayError::CaseDiverged(claim.claim_id.clone()));
                }
            }
            state.apply(&e);
        }
        if let Some(judge) = logged.judge.get(&claim.claim_id) {
            for e in judge_events(&state, judge.clone())? {
                state.apply(&e);
            }
        }
    }
    Ok(state.finals)
}
