//! A project directory: `messages.jsonl`, `claims.jsonl`, `events.log`
//! and `exports/`.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use loopwright_core::metrics::{label_distribution, variability_table, LabelDistribution, VariabilityTable};
use loopwright_core::{effort_report, AnnotationEvent, EffortReport, Timestamp};

use crate::bundle::{self, ExportError, Manifest};
use crate::clock::{system_clock, Clock};
use crate::dataset::{Dataset, ImportError};
use crate::eventlog::{self, Event, EventLog, LogError, LogHeader};
use crate::jsonl::{self, JsonlError};
use crate::orchestrate::{self, OrchestrateError};
use crate::state::ProjectState;

pub const MESSAGES_FILE: &str = "messages.jsonl";
pub const CLAIMS_FILE: &str = "claims.jsonl";
pub const EVENTS_FILE: &str = "events.log";
pub const EXPORTS_DIR: &str = "exports";

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("{0}: project already exists")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Orchestrate(#[from] OrchestrateError),
}

pub struct Project {
    dir: PathBuf,
    dataset: Dataset,
    log: EventLog,
    state: ProjectState,
    clock: Clock,
}

pub type SharedProject = Arc<Mutex<Project>>;

impl Project {
    pub fn create(dir: &Path, dataset: Dataset, project_seed: u64) -> Result<Self, ProjectError> {
        if dir.join(EVENTS_FILE).exists() {
            return Err(ProjectError::Exists(dir.to_path_buf()));
        }
        std::fs::create_dir_all(dir).map_err(|source| ProjectError::Io { path: dir.to_path_buf(), source })?;
        jsonl::write(&dir.join(MESSAGES_FILE), "loopwright/messages", dataset.messages())?;
        jsonl::write(&dir.join(CLAIMS_FILE), "loopwright/claims", dataset.claims())?;
        let log = EventLog::create(&dir.join(EVENTS_FILE), LogHeader::new(project_seed))?;
        Ok(Self { dir: dir.to_path_buf(), dataset, log, state: ProjectState::default(), clock: system_clock() })
    }

    pub fn open(dir: &Path) -> Result<Self, ProjectError> {
        let messages = jsonl::read(&dir.join(MESSAGES_FILE))?;
        let dataset = Dataset::new(messages)?;
        let (log, events) = EventLog::open(&dir.join(EVENTS_FILE))?;
        let state = ProjectState::fold(&events);
        Ok(Self { dir: dir.to_path_buf(), dataset, log, state, clock: system_clock() })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn into_shared(self) -> SharedProject {
        Arc::new(Mutex::new(self))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn seed(&self) -> u64 {
        self.log.header().project_seed
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn state(&self) -> &ProjectState {
        &self.state
    }

    pub fn now(&self) -> Timestamp {
        (self.clock)()
    }

    pub fn events(&self) -> Result<Vec<Event>, ProjectError> {
        Ok(eventlog::read(self.log.path())?.1)
    }

    /// Persists, then applies. Nothing is applied if the write fails.
    pub fn append(&mut self, events: Vec<Event>) -> Result<(), ProjectError> {
        self.log.append(&events)?;
        for e in &events {
            self.state.apply(e);
        }
        Ok(())
    }

    fn claim_text(&self, claim_id: &str) -> Result<String, OrchestrateError> {
        self.dataset
            .claim(claim_id)
            .map(|c| c.text.clone())
            .ok_or_else(|| OrchestrateError::UnknownClaim(claim_id.into()))
    }

    /// Records routing for a claim if it has become possible.
    pub fn advance(&mut self, claim_id: &str) -> Result<Vec<Event>, ProjectError> {
        let text = self.claim_text(claim_id)?;
        let events = orchestrate::advance(&self.state, claim_id, &text, self.seed())?;
        self.append(events.clone())?;
        Ok(events)
    }

    pub fn record_human(&mut self, annotation: AnnotationEvent) -> Result<Vec<Event>, ProjectError> {
        let text = self.claim_text(&annotation.claim_id)?;
        let events = orchestrate::human_events(&self.state, annotation, &text, self.seed())?;
        self.append(events.clone())?;
        Ok(events)
    }

    pub fn record_judge(&mut self, annotation: AnnotationEvent) -> Result<Vec<Event>, ProjectError> {
        self.claim_text(&annotation.claim_id)?;
        let events = orchestrate::judge_events(&self.state, annotation)?;
        self.append(events.clone())?;
        Ok(events)
    }

    pub fn record_platinum(&mut self, annotation: AnnotationEvent) -> Result<(), ProjectError> {
        self.claim_text(&annotation.claim_id)?;
        self.append(vec![Event::Platinum { annotation }])
    }

    pub fn effort(&self) -> EffortReport {
        effort_report(&self.state.decisions, &self.state.finals, &self.dataset.strata())
    }

    pub fn variability(&self) -> VariabilityTable {
        let strata = self.dataset.strata();
        variability_table(
            self.state
                .triples
                .iter()
                .map(|(id, run)| (strata.get(id).map_or("Non-HS", String::as_str), run)),
        )
    }

    /// Label distribution of the gold track (or platinum with `platinum`).
    pub fn label_distribution(&self, platinum: bool) -> LabelDistribution {
        let labels = if platinum {
            self.state.platinum().into_iter().map(|(k, v)| (k, v.label)).collect()
        } else {
            self.state.gold()
        };
        label_distribution(self.dataset.claims().filter_map(|c| {
            let message = self.dataset.message_of(&c.claim_id)?;
            Some((message.hs_label, c.claim_hs_label, *labels.get(&c.claim_id)?))
        }))
    }

    pub fn export(&self) -> Result<Manifest, ExportError> {
        bundle::export_bundle(&self.dataset, &self.state, &self.dir.join(EXPORTS_DIR))
    }
}
