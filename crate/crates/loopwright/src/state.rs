//! Project state rebuilt from the event log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use loopwright_core::{
    aggregate_platinum, AnnotationEvent, AnnotatorRef, CwLabel, FinalLabelRecord, JudgeCase, PromptMode,
    RoutingDecision, Timestamp, TripleRun,
};

use crate::eventlog::Event;

/// Final label of the fully human track.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatinumRecord {
    pub claim_id: String,
    pub label: CwLabel,
    /// The three votes all differed and a fourth annotator decided.
    #[serde(default)]
    pub fourth_annotator: bool,
}

/// Which track an annotation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationTrack {
    Gold,
    Platinum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub track: AnnotationTrack,
    #[serde(flatten)]
    pub event: AnnotationEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectState {
    pub run: Option<(String, PromptMode)>,
    pub human: BTreeMap<String, AnnotationEvent>,
    pub triples: BTreeMap<String, TripleRun>,
    pub triple_times: BTreeMap<String, Timestamp>,
    pub failures: BTreeMap<String, String>,
    pub decisions: BTreeMap<String, RoutingDecision>,
    pub cases: BTreeMap<String, JudgeCase>,
    /// Claim ids in the order their judge cases were opened.
    pub case_order: Vec<String>,
    pub judge: BTreeMap<String, AnnotationEvent>,
    pub finals: BTreeMap<String, FinalLabelRecord>,
    pub platinum_votes: BTreeMap<String, Vec<AnnotationEvent>>,
    pub events: usize,
}

impl ProjectState {
    pub fn fold<'a>(events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut s = Self::default();
        for e in events {
            s.apply(e);
        }
        s
    }

    pub fn apply(&mut self, event: &Event) {
        self.events += 1;
        match event {
            Event::RunStarted { model, prompt_mode } => self.run = Some((model.clone(), *prompt_mode)),
            Event::Human { annotation } => {
                self.human.insert(annotation.claim_id.clone(), annotation.clone());
            }
            Event::Triple { run, at } => {
                self.failures.remove(&run.claim_id);
                self.triple_times.insert(run.claim_id.clone(), *at);
                self.triples.insert(run.claim_id.clone(), run.clone());
            }
            Event::Failed { claim_id, error, .. } => {
                self.failures.insert(claim_id.clone(), error.clone());
            }
            Event::Routed { claim_id, decision } => {
                self.decisions.insert(claim_id.clone(), *decision);
            }
            Event::JudgeCaseOpened { case } => {
                if self.cases.insert(case.claim_id.clone(), case.clone()).is_none() {
                    self.case_order.push(case.claim_id.clone());
                }
            }
            Event::Judge { annotation } => {
                self.judge.insert(annotation.claim_id.clone(), annotation.clone());
            }
            Event::Final { record } => {
                self.finals.insert(record.claim_id.clone(), record.clone());
            }
            Event::Platinum { annotation } => {
                self.platinum_votes.entry(annotation.claim_id.clone()).or_default().push(annotation.clone());
            }
        }
    }

    pub fn human_label(&self, claim_id: &str) -> Option<CwLabel> {
        self.human.get(claim_id).map(|a| a.label)
    }

    /// Judge cases still waiting for a decision, oldest first.
    pub fn open_cases(&self) -> impl Iterator<Item = &JudgeCase> {
        self.case_order
            .iter()
            .filter(|id| !self.finals.contains_key(*id))
            .filter_map(|id| self.cases.get(id))
    }

    pub fn gold(&self) -> BTreeMap<String, CwLabel> {
        self.finals.iter().map(|(id, r)| (id.clone(), r.gold)).collect()
    }

    /// Majority of the first three votes; a fourth vote decides when they
    /// all differ. Claims without a decision yet are absent.
    pub fn platinum(&self) -> BTreeMap<String, PlatinumRecord> {
        let mut out = BTreeMap::new();
        for (id, votes) in &self.platinum_votes {
            if votes.len() < 3 {
                continue;
            }
            let three = [votes[0].label, votes[1].label, votes[2].label];
            let record = match (aggregate_platinum(&three), votes.get(3)) {
                (Some(label), _) => PlatinumRecord { claim_id: id.clone(), label, fourth_annotator: false },
                (None, Some(fourth)) => {
                    PlatinumRecord { claim_id: id.clone(), label: fourth.label, fourth_annotator: true }
                }
                (None, None) => continue,
            };
            out.insert(id.clone(), record);
        }
        out
    }

    /// Every individual label: first annotator, the three model runs,
    /// judge, and platinum votes.
    pub fn annotations(&self) -> Vec<AnnotationRow> {
        let gold = |event: AnnotationEvent| AnnotationRow { track: AnnotationTrack::Gold, event };
        let mut out: Vec<AnnotationRow> = self.human.values().cloned().map(gold).collect();
        for (id, run) in &self.triples {
            let at = self.triple_times.get(id).copied().unwrap_or_default();
            for (i, label) in run.labels.iter().enumerate() {
                out.push(gold(AnnotationEvent {
                    claim_id: id.clone(),
                    source: AnnotatorRef::model(run.model.clone()),
                    label: *label,
                    run_index: i as u32,
                    prompt_mode: run.prompt_mode,
                    created_at: at,
                }));
            }
        }
        out.extend(self.judge.values().cloned().map(gold));
        for votes in self.platinum_votes.values() {
            out.extend(
                votes.iter().cloned().map(|event| AnnotationRow { track: AnnotationTrack::Platinum, event }),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use loopwright_core::CwLabel::*;

    fn vote(claim: &str, who: &str, label: CwLabel) -> Event {
        Event::Platinum {
            annotation: AnnotationEvent {
                claim_id: claim.into(),
                source: AnnotatorRef::human(who),
                label,
                run_index: 0,
                prompt_mode: PromptMode::NotApplicable,
                created_at: Timestamp(0),
            },
        }
    }

    #[test]
    fn platinum_majority_and_fourth_annotator() {
        let events = vec![
            vote("a", "1", Cfs),
            vote("a", "2", Ufs),
            vote("a", "3", Cfs),
            vote("b", "1", Cfs),
            vote("b", "2", Ufs),
            vote("b", "3", Nfs),
            vote("c", "1", Cfs),
            vote("c", "2", Ufs),
            vote("c", "3", Nfs),
            vote("c", "4", Ufs),
            vote("d", "1", Nfs),
        ];
        let p = ProjectState::fold(&events).platinum();
        assert_eq!(p["a"].label, Cfs);
        assert!(!p.contains_key("b"));
        assert_eq!((p["c"].label, p["c"].fourth_annotator), (Ufs, true));
        assert!(!p.contains_key("d"));
    }
}
