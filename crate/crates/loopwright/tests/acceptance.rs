//! Acceptance checks. Prints one PASS, FAIL or SKIP line per criterion and
//! exits non-zero if any check fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{claim_id, judge, messages, project, scripted, spec};
use loopwright::bundle::import_bundle;
use loopwright::clock::fixed_clock;
use loopwright::dataset::Dataset;
use loopwright::experiment::run_hs_detection;
use loopwright::gateway::{ChatRequest, FnBackend, Gateway};
use loopwright::orchestrate::replay_finals;
use loopwright::pipeline::{run_pipeline, PipelineOptions};
use loopwright::service::{Role, Service, ServiceConfig, TokenGrant};
use loopwright_core::experiment::{Condition, ExperimentConfig, Track};
use loopwright_core::metrics::{
    cohens_kappa, compare_tracks, krippendorff_alpha_nominal, label_distribution, macro_prf, percent_agreement,
    rank_biserial_r, u_statistic, AnnotationMatrix, LabelCounts,
};
use loopwright_core::{
    classify_variability, claim_seed, make_judge_case, majority_vote, reconcile, AnnotatorRef, CwLabel, HsLabel,
    Label, ModelRegistry, ModelSpec, NeedsJudgeReason, PromptMode, ProvenanceCategory, RoutingDecision, SizeClass,
    VariabilityClass,
};
use CwLabel::{Cfs, Nfs, Ufs};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name} = {got}, expected {want} ± {tol}"))
}

// ---- routing ------------------------------------------------------------

fn routing_exhaustive() -> Check {
    let start = Instant::now();
    let mut cases = 0;
    for a in CwLabel::ALL {
        for b in CwLabel::ALL {
            for c in CwLabel::ALL {
                let triple = [*a, *b, *c];
                let counts: Vec<usize> = CwLabel::ALL.iter().map(|l| triple.iter().filter(|t| *t == l).count()).collect();
                let top = *counts.iter().max().unwrap();
                let oracle_majority = (top >= 2).then(|| CwLabel::ALL[counts.iter().position(|n| *n == top).unwrap()]);
                let oracle_class = match top {
                    3 => VariabilityClass::AllEqual,
                    2 => VariabilityClass::TwoEqual,
                    _ => VariabilityClass::Unequal,
                };
                ensure(majority_vote(&triple) == oracle_majority, || format!("majority of {triple:?}"))?;
                ensure(classify_variability(&triple) == oracle_class, || format!("variability of {triple:?}"))?;
                for h in CwLabel::ALL {
                    let oracle = match oracle_majority {
                        None => RoutingDecision::NeedsJudge { reason: NeedsJudgeReason::NoMajority },
                        Some(m) if m == *h => RoutingDecision::Accepted { label: *h },
                        Some(_) => RoutingDecision::NeedsJudge { reason: NeedsJudgeReason::Conflict },
                    };
                    ensure(reconcile(*h, &triple) == oracle, || format!("reconcile({h:?}, {triple:?})"))?;
                    cases += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(cases == 81, || format!("{cases} cases"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{cases} cases match the enumeration oracle in {elapsed:?}"))
}

// ---- metrics ------------------------------------------------------------

fn two_raters(a: &[CwLabel], b: &[CwLabel]) -> (AnnotationMatrix<CwLabel>, AnnotatorRef, AnnotatorRef) {
    let (ra, rb) = (AnnotatorRef::human("a"), AnnotatorRef::human("b"));
    let items = (0..a.len()).map(|i| format!("i{i}")).collect();
    let m = AnnotationMatrix::from_columns(
        items,
        vec![
            (ra.clone(), a.iter().copied().map(Some).collect()),
            (rb.clone(), b.iter().copied().map(Some).collect()),
        ],
    )
    .unwrap();
    (m, ra, rb)
}

fn metric_oracles() -> Check {
    let (m, ra, rb) = two_raters(&[Cfs, Cfs, Nfs, Ufs], &[Cfs, Nfs, Nfs, Ufs]);
    let kappa = cohens_kappa(&m, &ra, &rb).map_err(|e| e.to_string())?;
    close("kappa", kappa, 0.636364, 1e-6)?;
    close("agreement", percent_agreement(&m, &ra, &rb).map_err(|e| e.to_string())?, 0.75, 1e-12)?;

    let (m, _, _) = two_raters(&[Cfs, Cfs, Nfs, Nfs], &[Cfs, Nfs, Nfs, Nfs]);
    close("alpha", krippendorff_alpha_nominal(&m).map_err(|e| e.to_string())?, 0.533333, 1e-6)?;

    let (u, _) = u_statistic(&[1.0, 3.0], &[2.0, 4.0]).map_err(|e| e.to_string())?;
    close("U", u, 1.0, 1e-6)?;
    close("r", rank_biserial_r(u, 2, 2), 0.5, 1e-6)?;

    use HsLabel::{Hateful as H, NonHateful as N};
    let f1 = macro_prf(&[H, H, N, N], &[H, N, N, N]).map_err(|e| e.to_string())?.f1;
    close("macro-F1", f1, 0.733333, 1e-6)?;

    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut violations = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let draw = |rng: &mut StdRng| CwLabel::ALL[rng.random_range(0..3)];
        let a: Vec<CwLabel> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<CwLabel> = (0..n).map(|_| draw(&mut rng)).collect();
        let (m, ra, rb) = two_raters(&a, &b);
        let three = percent_agreement(&m, &ra, &rb).map_err(|e| e.to_string())?;
        let binary = percent_agreement(&m.collapsed(), &ra, &rb).map_err(|e| e.to_string())?;
        if binary < three {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} collapse violations"))?;
    Ok("fixtures within 1e-6; 200 random matrices, 0 collapse violations".into())
}

fn effect_size_consistency() -> Check {
    const TOTAL: f64 = 227.0;
    let rows = [("harassment", 3872.5, 0.227), ("hate", 4236.5, 0.154)];
    // r = 1 - 2U / (n_a n_b) when U is below its mean, so n_a n_b = 2U / (1 - r).
    let product = 2.0 * rows[0].1 / (1.0 - rows[0].2);
    let disc = TOTAL * TOTAL - 4.0 * product;
    ensure(disc >= 0.0, || format!("no real group sizes for n_a n_b = {product}"))?;
    let n_a = ((TOTAL - disc.sqrt()) / 2.0).round() as usize;
    let n_b = TOTAL as usize - n_a;
    ensure((n_a * n_b) as f64 - product < 10.0, || format!("{n_a} x {n_b} far from {product}"))?;
    let mut got = Vec::new();
    for (name, u, want) in rows {
        let r = rank_biserial_r(u, n_a, n_b);
        close(name, r, want, 0.005)?;
        got.push(format!("{name} r={r:.4}"));
    }
    Ok(format!("n_a={n_a}, n_b={n_b} (product {}); {}", n_a * n_b, got.join(", ")))
}

// ---- pipeline -----------------------------------------------------------

async fn mock_pipeline() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (humans, script) = common::hundred_claim_fixture();
    let judges: Vec<_> = (0..45).map(|i| judge(&claim_id(i), [Cfs, Nfs, Ufs][i % 3])).collect();
    let p = project(dir.path(), messages(100, 4), 2024, fixed_clock(1));
    let opts = PipelineOptions { model: spec(), mode: PromptMode::ZeroShot, max_claims: None };
    let out = run_pipeline(&p, &scripted(script), &humans, &judges, &opts).await.map_err(|e| e.to_string())?;
    let effort = &out.report.effort;
    ensure(effort.judged.count == 45 && effort.judged.percent == 45.0, || format!("judged {:?}", effort.judged))?;
    let conflicts = out
        .report
        .decisions
        .values()
        .filter(|d| **d == RoutingDecision::NeedsJudge { reason: NeedsJudgeReason::Conflict })
        .count();
    ensure(conflicts == 40, || format!("{conflicts} conflicts"))?;

    let g = p.lock().unwrap();
    let events = g.events().map_err(|e| e.to_string())?;
    let replayed = replay_finals(&events, g.dataset(), g.seed()).map_err(|e| e.to_string())?;
    ensure(replayed.len() == 100, || format!("{} replayed finals", replayed.len()))?;
    let as_bytes = |m: &BTreeMap<String, _>| serde_json::to_vec(m).unwrap();
    ensure(as_bytes(&replayed) == as_bytes(&g.state().finals), || "replayed finals differ".into())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("judged 45/100 (40 conflict + 5 no-majority); 100 finals replay byte-identically in {elapsed:?}"))
}

// ---- released data ------------------------------------------------------

fn counts(cfs: usize, nfs: usize, ufs: usize) -> LabelCounts {
    LabelCounts { cfs, nfs, ufs }
}

fn conditional_replay() -> Option<Check> {
    let dir = PathBuf::from(std::env::var_os("LOOPWRIGHT_RELEASE_BUNDLE")?);
    Some((|| {
        let bundle = import_bundle(&dir).map_err(|e| e.to_string())?;
        let gold: BTreeMap<String, CwLabel> = bundle.gold.iter().map(|r| (r.claim_id.clone(), r.gold)).collect();
        let platinum: BTreeMap<String, CwLabel> =
            bundle.platinum.iter().map(|r| (r.claim_id.clone(), r.label)).collect();
        let (k3, k2) = compare_tracks(&gold, &platinum).map_err(|e| e.to_string())?;
        close("kappa 3-class", k3, 0.800, 0.005)?;
        close("kappa binary", k2, 0.815, 0.005)?;

        let prov = |p: ProvenanceCategory| bundle.gold.iter().filter(|r| r.provenance == p).count();
        let judged = bundle.gold.len() - prov(ProvenanceCategory::Accepted);
        let (human, llm) = (prov(ProvenanceCategory::JudgeSidedHuman), prov(ProvenanceCategory::JudgeSidedLlm));
        ensure((judged, human, llm) == (754, 589, 138), || format!("effort {judged}/{human}/{llm}"))?;

        let dist = |labels: &BTreeMap<String, CwLabel>| {
            label_distribution(bundle.dataset.claims().filter_map(|c| {
                let m = bundle.dataset.message_of(&c.claim_id)?;
                Some((m.hs_label, c.claim_hs_label, *labels.get(&c.claim_id)?))
            }))
        };
        let (g, p) = (dist(&gold), dist(&platinum));
        let want_gold = [counts(132, 75, 60), counts(191, 142, 33), counts(0, 0, 0), counts(348, 318, 316)];
        let want_plat = [counts(131, 59, 77), counts(183, 143, 40), counts(0, 0, 0), counts(327, 339, 316)];
        for (name, d, want) in [("gold", g, want_gold), ("platinum", p, want_plat)] {
            let got = [d.hs_claim_non_hateful, d.hs_claim_hateful, d.hs_claim_unlabeled, d.non_hs];
            ensure(got == want, || format!("{name} distribution {got:?}"))?;
        }
        Ok(format!("kappa {k3:.3}/{k2:.3}; judged 754, sided human 589, sided model 138; distributions exact"))
    })())
}

// ---- judge cases --------------------------------------------------------

fn blind_shuffle() -> Check {
    let n = 10_000;
    let human_first = (0..n)
        .filter(|i| {
            let id = claim_id(*i);
            let case = make_judge_case(&id, "t", Nfs, Some(Cfs), claim_seed(2024, &id)).unwrap();
            case.presented_labels[0] == Nfs
        })
        .count();
    let pct = 100.0 * human_first as f64 / n as f64;
    close("human-first share", pct, 50.0, 2.0)?;
    Ok(format!("human label first in {pct:.2}% of {n} cases"))
}

// ---- service ------------------------------------------------------------

async fn lease_exclusivity() -> Check {
    const CLIENTS: usize = 16;
    const TASKS: usize = 200;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = project(dir.path(), messages(TASKS, 4), 1, fixed_clock(0));
    let tokens: Vec<TokenGrant> = (0..CLIENTS)
        .map(|i| TokenGrant { token: format!("t{i}"), annotator: format!("a{i}"), roles: vec![Role::FirstAnnotator] })
        .chain([TokenGrant { token: "op".into(), annotator: "op".into(), roles: vec![Role::Operator] }])
        .collect();
    let service = Service::new(ServiceConfig { tokens, ..ServiceConfig::default() }).with_clock(fixed_clock(0));
    service.add_project("p", p.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let base = format!("http://{}", listener.local_addr().map_err(|e| e.to_string())?);
    tokio::spawn(loopwright::service::serve(listener, Arc::new(service)));

    let seen: Arc<Mutex<Vec<String>>> = Arc::default();
    let mut clients = Vec::new();
    for i in 0..CLIENTS {
        let (base, seen) = (base.clone(), seen.clone());
        clients.push(tokio::spawn(async move {
            let http = reqwest::Client::new();
            let token = format!("t{i}");
            let mut rejected = 0;
            loop {
                let body: serde_json::Value = http
                    .get(format!("{base}/tasks/next?role=first_annotator&project=p"))
                    .bearer_auth(&token)
                    .send()
                    .await
                    .unwrap()
                    .json()
                    .await
                    .unwrap();
                let Some(task) = body["lease"]["task_id"].as_str() else { break };
                seen.lock().unwrap().push(task.to_string());
                let status = http
                    .post(format!("{base}/tasks/{task}/submit"))
                    .bearer_auth(&token)
                    .json(&serde_json::json!({ "label": "Non-Factual" }))
                    .send()
                    .await
                    .unwrap()
                    .status();
                if !status.is_success() {
                    rejected += 1;
                }
            }
            rejected
        }));
    }
    let mut rejected = 0;
    for c in clients {
        rejected += c.await.map_err(|e| e.to_string())?;
    }
    let seen = seen.lock().unwrap();
    let unique: BTreeSet<&String> = seen.iter().collect();
    ensure(seen.len() == TASKS && unique.len() == TASKS, || {
        format!("{} leases for {} distinct tasks", seen.len(), unique.len())
    })?;
    ensure(rejected == 0, || format!("{rejected} submits rejected"))?;
    let g = p.lock().unwrap();
    ensure(g.state().human.len() == TASKS, || format!("{} labels recorded", g.state().human.len()))?;
    Ok(format!("{CLIENTS} clients, {TASKS} tasks, 0 double assignments, {TASKS} labels recorded"))
}

// ---- experiment ---------------------------------------------------------

async fn delta_f1_harness() -> Check {
    let dataset = Dataset::new(messages(8, 2)).map_err(|e| e.to_string())?;
    let labels: BTreeMap<String, CwLabel> =
        [Cfs, Nfs, Ufs, Cfs, Nfs, Ufs, Nfs, Nfs].iter().enumerate().map(|(i, l)| (claim_id(i), *l)).collect();
    let registry = ModelRegistry::new(vec![ModelSpec::new("flip", SizeClass::Large, "Mock", "mock://")])
        .map_err(|e| e.to_string())?;
    let gw = Gateway::new(Arc::new(FnBackend(|_: &ModelSpec, r: &ChatRequest| {
        let flip = r.user_text().contains("[Check-worthy Factual]");
        Ok(if flip { "non-hateful" } else { "hateful" }.to_string())
    })));
    let cfg = ExperimentConfig {
        models: vec!["flip".into()],
        runs_per_model: 3,
        conditions: vec![Condition::WithCw, Condition::WithoutCw],
        seed: 1,
        cw_track: Track::Gold,
        temperature: None,
        max_failure_rate: 0.05,
    };
    let out = run_hs_detection(&cfg, &registry, &gw, &dataset, &labels).await.map_err(|e| e.to_string())?;
    // Gold H,N,H,N. Untagged: all hateful, macro F1 (2/3 + 0)/2.
    // Tagged: N,N,H,H, macro F1 (1/2 + 1/2)/2.
    let want = 0.5 - 1.0 / 3.0;
    let row = &out.table.rows[0];
    let got = row.delta_f1().ok_or("missing delta")?;
    ensure(got == want, || format!("delta F1 {got}, expected {want}"))?;
    for cell in out.table.rows.iter().flat_map(|r| [r.with_cw, r.without_cw]).flatten() {
        ensure(cell.precision.std == 0.0 && cell.recall.std == 0.0 && cell.f1.std == 0.0, || {
            format!("non-zero std in {cell:?}")
        })?;
    }
    Ok(format!("delta F1 = {got:.6} (exact), std 0 over 3 runs"))
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let report = |r: Check| match r {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("routing exhaustiveness", report(routing_exhaustive())),
        ("metric oracles", report(metric_oracles())),
        ("effect-size consistency", report(effect_size_consistency())),
        ("end-to-end mock pipeline", report(rt.block_on(mock_pipeline()))),
        (
            "conditional replay",
            conditional_replay()
                .map(report)
                .unwrap_or_else(|| Outcome::Skip("LOOPWRIGHT_RELEASE_BUNDLE not set".into())),
        ),
        ("blind-shuffle statistics", report(blind_shuffle())),
        ("lease exclusivity", report(rt.block_on(lease_exclusivity()))),
        ("delta-F1 harness", report(rt.block_on(delta_f1_harness()))),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Outcome::Pass(d) => println!("PASS {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP {name}: {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
