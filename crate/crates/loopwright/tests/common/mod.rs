#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use loopwright::clock::Clock;
use loopwright::dataset::Dataset;
use loopwright::gateway::{BackendError, ChatBackend, ChatRequest, FnBackend, Gateway};
use loopwright::project::{Project, SharedProject};
use loopwright_core::{
    AnnotationEvent, AnnotatorRef, ArgumentRole, ClaimRecord, CwLabel, HsLabel, Label, MessageRecord, ModelSpec,
    PromptMode, SizeClass, Timestamp,
};

pub fn claim_id(i: usize) -> String {
    format!("c{i:04}")
}

/// `n` claims spread over messages of `per_message` claims; even messages
/// are hateful.
pub fn messages(n: usize, per_message: usize) -> Vec<MessageRecord> {
    let mut out = Vec::new();
    for (m, chunk) in (0..n).collect::<Vec<_>>().chunks(per_message).enumerate() {
        let message_id = format!("m{m:04}");
        out.push(MessageRecord {
            message_id: message_id.clone(),
            hs_label: if m % 2 == 0 { HsLabel::Hateful } else { HsLabel::NonHateful },
            claims: chunk
                .iter()
                .enumerate()
                .map(|(k, i)| ClaimRecord {
                    claim_id: claim_id(*i),
                    message_id: message_id.clone(),
                    index: k as u32,
                    text: format!("claim number {i}"),
                    argument_role: ArgumentRole::Unmarked,
                    claim_hs_label: None,
                })
                .collect(),
            raw_text: None,
        });
    }
    out
}

pub fn project(dir: &Path, msgs: Vec<MessageRecord>, seed: u64, clock: Clock) -> SharedProject {
    Project::create(dir, Dataset::new(msgs).unwrap(), seed).unwrap().with_clock(clock).into_shared()
}

pub fn spec() -> ModelSpec {
    let mut s = ModelSpec::new("mock", SizeClass::Small, "Mock", "mock://endpoint");
    s.max_concurrency = 8;
    s
}

pub fn human(id: &str, label: CwLabel) -> AnnotationEvent {
    AnnotationEvent {
        claim_id: id.into(),
        source: AnnotatorRef::human("fa1"),
        label,
        run_index: 0,
        prompt_mode: PromptMode::NotApplicable,
        created_at: Timestamp(0),
    }
}

pub fn judge(id: &str, label: CwLabel) -> AnnotationEvent {
    AnnotationEvent { source: AnnotatorRef::judge("j1"), ..human(id, label) }
}

/// `item:slot:attempt`
pub fn parse_nonce(nonce: &str) -> (String, usize, u32) {
    let mut parts = nonce.rsplitn(3, ':');
    let attempt = parts.next().unwrap().parse().unwrap();
    let slot = parts.next().unwrap().parse().unwrap();
    (parts.next().unwrap().to_string(), slot, attempt)
}

/// Model that answers each claim slot from a fixed script.
pub fn scripted(script: BTreeMap<String, [CwLabel; 3]>) -> Gateway {
    Gateway::new(Arc::new(FnBackend(move |_: &ModelSpec, r: &ChatRequest| {
        let (item, slot, _) = parse_nonce(&r.nonce);
        Ok(script[&item][slot].name().to_string())
    })))
}

/// Scripted backend that fails every request once `budget` is spent.
pub struct Budgeted {
    pub script: BTreeMap<String, [CwLabel; 3]>,
    pub budget: Mutex<usize>,
    pub calls: AtomicUsize,
}

#[async_trait::async_trait]
impl ChatBackend for Budgeted {
    async fn complete(&self, _: &ModelSpec, r: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        {
            let mut b = self.budget.lock().unwrap();
            if *b == 0 {
                return Err(BackendError::Unavailable("budget exhausted".into()));
            }
            *b -= 1;
        }
        let (item, slot, _) = parse_nonce(&r.nonce);
        Ok(self.script[&item][slot].name().to_string())
    }
}

use CwLabel::{Cfs, Nfs, Ufs};

/// 100 claims: 40 where the model majority contradicts the human, 5 with
/// three different model labels, 55 agreeing. Returns humans and script.
pub fn hundred_claim_fixture() -> (Vec<AnnotationEvent>, BTreeMap<String, [CwLabel; 3]>) {
    let mut humans = Vec::new();
    let mut script = BTreeMap::new();
    for i in 0..100 {
        let id = claim_id(i);
        let (h, triple) = match i {
            0..=39 => (Cfs, [Nfs, Nfs, Cfs]),
            40..=44 => (Ufs, [Cfs, Ufs, Nfs]),
            _ if i % 2 == 0 => (Nfs, [Nfs, Nfs, Nfs]),
            _ => (Ufs, [Ufs, Cfs, Ufs]),
        };
        humans.push(human(&id, h));
        script.insert(id, triple);
    }
    (humans, script)
}
