//! Pure parts of the downstream experiments: message reconstruction,
//! per-run scoring, result-table aggregation and the moderation-score group
//! comparison.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{MetricError, PromptError};
use crate::label::{CwLabel, HsLabel};
use crate::metrics::{macro_prf, GroupComparison, Prf};
use crate::model::{ModelRegistry, SizeClass};
use crate::prompt::{build_hs_prompt, wrap_claims, PromptBundle};
use crate::record::MessageRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    WithCw,
    WithoutCw,
}

impl Condition {
    pub fn with_cw(self) -> bool {
        self == Condition::WithCw
    }

    pub fn header(self) -> &'static str {
        match self {
            Condition::WithCw => "w/ check-worthiness",
            Condition::WithoutCw => "w/o check-worthiness",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    #[default]
    Gold,
    Platinum,
}

fn default_runs() -> usize {
    3
}

fn default_conditions() -> Vec<Condition> {
    alloc::vec![Condition::WithCw, Condition::WithoutCw]
}

fn default_failure_rate() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub models: Vec<String>,
    #[serde(default = "default_runs")]
    pub runs_per_model: usize,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cw_track: Track,
    /// Overrides the registry temperature for every model.
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Runs whose share of failed messages exceeds this are flagged invalid.
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("runs_per_model must be at least 1")]
    NoRuns,
    #[error("at least one condition is required")]
    NoConditions,
    #[error("at least one model is required")]
    NoModels,
    #[error("model {0} is not in the registry")]
    UnknownModel(String),
}

impl ExperimentConfig {
    pub fn validate(&self, registry: &ModelRegistry) -> Result<(), ConfigError> {
        if self.runs_per_model == 0 {
            return Err(ConfigError::NoRuns);
        }
        if self.conditions.is_empty() {
            return Err(ConfigError::NoConditions);
        }
        if self.models.is_empty() {
            return Err(ConfigError::NoModels);
        }
        if let Some(m) = self.models.iter().find(|m| !registry.contains(m)) {
            return Err(ConfigError::UnknownModel(m.clone()));
        }
        Ok(())
    }
}

fn claim_inputs<'a>(
    message: &'a MessageRecord,
    labels: &BTreeMap<String, CwLabel>,
) -> Vec<(&'a str, Option<CwLabel>)> {
    message
        .ordered_claims()
        .into_iter()
        .map(|c| (c.text.as_str(), labels.get(&c.claim_id).copied()))
        .collect()
}

/// Message text rebuilt from its claims in index order, optionally wrapped
/// in check-worthiness tags.
pub fn reconstruct_message(
    message: &MessageRecord,
    labels: &BTreeMap<String, CwLabel>,
    with_cw: bool,
) -> Result<String, PromptError> {
    wrap_claims(&claim_inputs(message, labels), with_cw)
}

/// Hate speech prompt for a whole message.
pub fn message_prompt(
    message: &MessageRecord,
    labels: &BTreeMap<String, CwLabel>,
    with_cw: bool,
) -> Result<PromptBundle, PromptError> {
    build_hs_prompt(&claim_inputs(message, labels), with_cw)
}

/// Scores of one full classification pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: String,
    pub condition: Condition,
    pub run: usize,
    pub prf: Prf,
    pub evaluated: usize,
    pub failures: usize,
    pub invalid: bool,
}

impl RunMetrics {
    /// Messages without a prediction are excluded from scoring and counted
    /// as failures.
    pub fn score(
        model: &str,
        condition: Condition,
        run: usize,
        gold: &[HsLabel],
        pred: &[Option<HsLabel>],
        max_failure_rate: f64,
    ) -> Result<Self, MetricError> {
        if gold.len() != pred.len() {
            return Err(MetricError::LengthMismatch { left: gold.len(), right: pred.len() });
        }
        let (g, p): (Vec<HsLabel>, Vec<HsLabel>) =
            gold.iter().zip(pred).filter_map(|(g, p)| Some((*g, (*p)?))).unzip();
        let failures = gold.len() - g.len();
        let prf = if g.is_empty() { Prf::default() } else { macro_prf(&g, &p)? };
        let invalid = g.is_empty() || failures as f64 > max_failure_rate * gold.len() as f64;
        Ok(Self { model: model.into(), condition, run, prf, evaluated: g.len(), failures, invalid })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation across runs.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: libm::sqrt(var) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionCell {
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
    pub valid_runs: usize,
    pub invalid_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Model display name, or `Avg <Size>` for size-class rows.
    pub label: String,
    pub model: Option<String>,
    pub size_class: SizeClass,
    pub with_cw: Option<ConditionCell>,
    pub without_cw: Option<ConditionCell>,
}

impl ResultRow {
    pub fn is_average(&self) -> bool {
        self.model.is_none()
    }

    /// `F1(with) - F1(without)` when both conditions ran.
    pub fn delta_f1(&self) -> Option<f64> {
        Some(self.with_cw?.f1.mean - self.without_cw?.f1.mean)
    }

    pub fn cell(&self, condition: Condition) -> Option<&ConditionCell> {
        match condition {
            Condition::WithCw => self.with_cw.as_ref(),
            Condition::WithoutCw => self.without_cw.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn cell_from_runs(runs: &[&RunMetrics]) -> Option<ConditionCell> {
    let valid: Vec<&&RunMetrics> = runs.iter().filter(|r| !r.invalid).collect();
    if runs.is_empty() {
        return None;
    }
    let collect = |f: fn(&Prf) -> f64| valid.iter().map(|r| f(&r.prf)).collect::<Vec<f64>>();
    Some(ConditionCell {
        precision: Stat::of(&collect(|p| p.precision)),
        recall: Stat::of(&collect(|p| p.recall)),
        f1: Stat::of(&collect(|p| p.f1)),
        valid_runs: valid.len(),
        invalid_runs: runs.len() - valid.len(),
    })
}

fn average_cells(cells: &[ConditionCell]) -> Option<ConditionCell> {
    if cells.is_empty() {
        return None;
    }
    let n = cells.len() as f64;
    let avg = |f: fn(&ConditionCell) -> Stat| {
        let (m, s) = cells.iter().fold((0.0, 0.0), |(m, s), c| (m + f(c).mean, s + f(c).std));
        Stat { mean: m / n, std: s / n }
    };
    Some(ConditionCell {
        precision: avg(|c| c.precision),
        recall: avg(|c| c.recall),
        f1: avg(|c| c.f1),
        valid_runs: cells.iter().map(|c| c.valid_runs).sum(),
        invalid_runs: cells.iter().map(|c| c.invalid_runs).sum(),
    })
}

/// Per-model mean ± std across runs, grouped by size class with an
/// average row after each class. Models keep the order of `models`.
pub fn aggregate_results(runs: &[RunMetrics], models: &[String], registry: &ModelRegistry) -> ResultTable {
    let mut table = ResultTable::default();
    for size in SizeClass::ALL {
        let mut class_rows = Vec::new();
        for key in models {
            let Ok(spec) = registry.get(key) else { continue };
            if spec.size_class != size {
                continue;
            }
            let pick = |c: Condition| -> Vec<&RunMetrics> {
                runs.iter().filter(|r| &r.model == key && r.condition == c).collect()
            };
            class_rows.push(ResultRow {
                label: spec.display_name.clone(),
                model: Some(key.clone()),
                size_class: size,
                with_cw: cell_from_runs(&pick(Condition::WithCw)),
                without_cw: cell_from_runs(&pick(Condition::WithoutCw)),
            });
        }
        if class_rows.is_empty() {
            continue;
        }
        let gather = |c: Condition| -> Vec<ConditionCell> {
            class_rows.iter().filter_map(|r| r.cell(c).copied()).filter(|c| c.valid_runs > 0).collect()
        };
        let average = ResultRow {
            label: format!("Avg {}", size.name()),
            model: None,
            size_class: size,
            with_cw: average_cells(&gather(Condition::WithCw)),
            without_cw: average_cells(&gather(Condition::WithoutCw)),
        };
        table.rows.extend(class_rows);
        table.rows.push(average);
    }
    table
}

/// Recomputes every model row directly from the per-run metrics and
/// reports the first cell that disagrees with the table.
pub fn check_consistency(table: &ResultTable, runs: &[RunMetrics]) -> Result<(), String> {
    const TOL: f64 = 1e-12;
    for row in table.rows.iter().filter(|r| !r.is_average()) {
        let model = row.model.as_deref().unwrap_or_default();
        for condition in [Condition::WithCw, Condition::WithoutCw] {
            let f1s: Vec<f64> = runs
                .iter()
                .filter(|r| r.model == model && r.condition == condition && !r.invalid)
                .map(|r| r.prf.f1)
                .collect();
            let Some(cell) = row.cell(condition) else {
                if runs.iter().any(|r| r.model == model && r.condition == condition) {
                    return Err(format!("{model} {condition:?}: runs exist but cell is missing"));
                }
                continue;
            };
            if f1s.len() != cell.valid_runs {
                return Err(format!("{model} {condition:?}: run count {} vs {}", f1s.len(), cell.valid_runs));
            }
            if f1s.is_empty() {
                continue;
            }
            let mut mean = 0.0;
            for v in &f1s {
                mean += v;
            }
            mean /= f1s.len() as f64;
            let mut sq = 0.0;
            for v in &f1s {
                sq += (v - mean) * (v - mean);
            }
            let std = libm::sqrt(sq / f1s.len() as f64);
            if (mean - cell.f1.mean).abs() > TOL || (std - cell.f1.std).abs() > TOL {
                return Err(format!("{model} {condition:?}: F1 {mean}±{std} vs {:?}", cell.f1));
            }
        }
    }
    Ok(())
}

/// One moderation score for one message and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationScore {
    pub message_id: String,
    pub dimension: String,
    pub score: f64,
}

/// Dimensions whose pooled mean does not exceed this are dropped.
pub const MODERATION_MIN_MEAN: f64 = 0.1;

pub const GROUP_WITHOUT_CFS: &str = "HS Mess. w/o CFS claims";
pub const GROUP_WITH_CFS: &str = "HS Mess. w/ at least one CFS claim";

/// `(message_id, has at least one CFS claim)` for every hateful message.
pub fn cfs_presence(messages: &[MessageRecord], labels: &BTreeMap<String, CwLabel>) -> Vec<(String, bool)> {
    messages
        .iter()
        .filter(|m| m.hs_label == HsLabel::Hateful)
        .map(|m| {
            let has = m.claims.iter().any(|c| labels.get(&c.claim_id) == Some(&CwLabel::Cfs));
            (m.message_id.clone(), has)
        })
        .collect()
}

/// Compares moderation scores of hateful messages without (group a) and
/// with (group b) a check-worthy claim, for every dimension whose pooled
/// mean exceeds `min_mean`.
pub fn moderation_compare(
    hs_messages: &[(String, bool)],
    scores: &[ModerationScore],
    min_mean: f64,
) -> Result<Vec<GroupComparison>, MetricError> {
    let members: BTreeSet<&str> = hs_messages.iter().map(|(id, _)| id.as_str()).collect();
    let mut table: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for s in scores.iter().filter(|s| members.contains(s.message_id.as_str())) {
        if !s.score.is_finite() {
            return Err(MetricError::NonFinite);
        }
        table.entry(s.dimension.as_str()).or_default().insert(s.message_id.as_str(), s.score);
    }
    if table.is_empty() {
        if let Some((id, _)) = hs_messages.first() {
            return Err(MetricError::MissingScores { message_id: id.clone(), dimension: String::from("*") });
        }
    }

    let mut out = Vec::new();
    for (dimension, by_message) in &table {
        let mut without = Vec::new();
        let mut with = Vec::new();
        for (id, has_cfs) in hs_messages {
            let score = *by_message.get(id.as_str()).ok_or_else(|| MetricError::MissingScores {
                message_id: id.clone(),
                dimension: (*dimension).into(),
            })?;
            if *has_cfs {
                with.push(score);
            } else {
                without.push(score);
            }
        }
        let pooled = (without.iter().sum::<f64>() + with.iter().sum::<f64>()) / hs_messages.len() as f64;
        if pooled <= min_mean || without.is_empty() || with.is_empty() {
            continue;
        }
        out.push(GroupComparison::compute(
            dimension,
            (GROUP_WITHOUT_CFS, &without),
            (GROUP_WITH_CFS, &with),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::record::{ArgumentRole, ClaimRecord};
    use alloc::vec;
    use HsLabel::{Hateful as H, NonHateful as N};

    fn message(id: &str, hs: HsLabel, texts: &[&str]) -> MessageRecord {
        MessageRecord {
            message_id: id.into(),
            hs_label: hs,
            claims: texts
                .iter()
                .enumerate()
                .map(|(i, t)| ClaimRecord {
                    claim_id: format!("{id}-{i}"),
                    message_id: id.into(),
                    index: i as u32,
                    text: (*t).into(),
                    argument_role: ArgumentRole::Unmarked,
                    claim_hs_label: None,
                })
                .collect(),
            raw_text: None,
        }
    }

    #[test]
    fn reconstruction_variants() {
        let m = message("m", H, &["claim1", "claim2"]);
        let mut labels = BTreeMap::new();
        assert_eq!(reconstruct_message(&m, &labels, false).unwrap(), "claim1 claim2");
        assert_eq!(reconstruct_message(&m, &labels, true), Err(PromptError::MissingCwLabel(0)));
        labels.insert("m-0".into(), CwLabel::Nfs);
        labels.insert("m-1".into(), CwLabel::Cfs);
        assert_eq!(
            reconstruct_message(&m, &labels, true).unwrap(),
            "[Non-Factual] claim1 [/Non-Factual] [Check-worthy Factual] claim2 [/Check-worthy Factual]"
        );
        let single = message("s", N, &["only"]);
        labels.insert("s-0".into(), CwLabel::Cfs);
        assert_eq!(
            reconstruct_message(&single, &labels, true).unwrap(),
            "[Check-worthy Factual] only [/Check-worthy Factual]"
        );
    }

    #[test]
    fn run_scoring_counts_failures() {
        let r = RunMetrics::score("m", Condition::WithCw, 0, &[H, N, N], &[Some(H), None, Some(N)], 0.05).unwrap();
        assert_eq!(r.failures, 1);
        assert_eq!(r.evaluated, 2);
        assert!(r.invalid);
        assert_eq!(r.prf.f1, 1.0);
    }

    fn registry() -> ModelRegistry {
        ModelRegistry::new(vec![
            ModelSpec::new("s1", SizeClass::Small, "f", "u"),
            ModelSpec::new("s2", SizeClass::Small, "f", "u"),
            ModelSpec::new("l1", SizeClass::Large, "g", "u"),
        ])
        .unwrap()
    }

    fn metrics(model: &str, condition: Condition, run: usize, f1: f64) -> RunMetrics {
        RunMetrics {
            model: model.into(),
            condition,
            run,
            prf: Prf { precision: f1, recall: f1, f1 },
            evaluated: 4,
            failures: 0,
            invalid: false,
        }
    }

    #[test]
    fn aggregation_and_size_averages() {
        let runs = vec![
            metrics("s1", Condition::WithCw, 0, 0.5),
            metrics("s1", Condition::WithCw, 1, 0.7),
            metrics("s1", Condition::WithoutCw, 0, 0.4),
            metrics("s1", Condition::WithoutCw, 1, 0.4),
            metrics("s2", Condition::WithCw, 0, 0.8),
            metrics("s2", Condition::WithoutCw, 0, 0.9),
            metrics("l1", Condition::WithCw, 0, 0.6),
            metrics("l1", Condition::WithoutCw, 0, 0.3),
        ];
        let models = vec!["s1".into(), "s2".into(), "l1".into()];
        let t = aggregate_results(&runs, &models, &registry());
        let labels: Vec<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["s1", "s2", "Avg Small", "l1", "Avg Large"]);
        let s1 = &t.rows[0];
        assert!((s1.with_cw.unwrap().f1.mean - 0.6).abs() < 1e-12);
        assert!((s1.with_cw.unwrap().f1.std - 0.1).abs() < 1e-12);
        assert!((s1.delta_f1().unwrap() - 0.2).abs() < 1e-12);
        let avg_small = &t.rows[2];
        assert!((avg_small.with_cw.unwrap().f1.mean - 0.7).abs() < 1e-12);
        assert!((avg_small.with_cw.unwrap().f1.std - 0.05).abs() < 1e-12);
        assert!((t.rows[4].delta_f1().unwrap() - 0.3).abs() < 1e-12);
        check_consistency(&t, &runs).unwrap();

        let mut tampered = t.clone();
        tampered.rows[0].with_cw.as_mut().unwrap().f1.mean = 0.9;
        assert!(check_consistency(&tampered, &runs).is_err());
    }

    #[test]
    fn invalid_runs_are_not_averaged() {
        let mut bad = metrics("s1", Condition::WithCw, 1, 0.0);
        bad.invalid = true;
        let runs = vec![metrics("s1", Condition::WithCw, 0, 0.5), bad];
        let t = aggregate_results(&runs, &["s1".into()], &registry());
        let cell = t.rows[0].with_cw.unwrap();
        assert_eq!((cell.valid_runs, cell.invalid_runs), (1, 1));
        assert_eq!(cell.f1.mean, 0.5);
        check_consistency(&t, &runs).unwrap();
    }

    #[test]
    fn config_validation() {
        let reg = registry();
        let mut cfg = ExperimentConfig {
            models: vec!["s1".into()],
            runs_per_model: 3,
            conditions: default_conditions(),
            seed: 0,
            cw_track: Track::Gold,
            temperature: None,
            max_failure_rate: 0.05,
        };
        cfg.validate(&reg).unwrap();
        cfg.runs_per_model = 0;
        assert_eq!(cfg.validate(&reg), Err(ConfigError::NoRuns));
        cfg.runs_per_model = 1;
        cfg.conditions.clear();
        assert_eq!(cfg.validate(&reg), Err(ConfigError::NoConditions));
        cfg.conditions.push(Condition::WithCw);
        cfg.models.push("nope".into());
        assert_eq!(cfg.validate(&reg), Err(ConfigError::UnknownModel("nope".into())));
    }

    fn score(id: &str, dim: &str, s: f64) -> ModerationScore {
        ModerationScore { message_id: id.into(), dimension: dim.into(), score: s }
    }

    #[test]
    fn moderation_filters_low_dimensions_and_separates_groups() {
        let hs = vec![("a".into(), false), ("b".into(), false), ("c".into(), true), ("d".into(), true)];
        let scores = vec![
            score("a", "harassment", 0.1),
            score("b", "harassment", 0.2),
            score("c", "harassment", 0.8),
            score("d", "harassment", 0.9),
            score("a", "violence", 0.05),
            score("b", "violence", 0.05),
            score("c", "violence", 0.05),
            score("d", "violence", 0.05),
        ];
        let out = moderation_compare(&hs, &scores, MODERATION_MIN_MEAN).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dimension, "harassment");
        assert_eq!(out[0].u_statistic, 0.0);
        assert_eq!(out[0].effect_size_r, 1.0);
        assert_eq!(out[0].group_a_name, GROUP_WITHOUT_CFS);

        let missing = &scores[1..];
        assert!(matches!(
            moderation_compare(&hs, missing, MODERATION_MIN_MEAN),
            Err(MetricError::MissingScores { .. })
        ));
    }

    #[test]
    fn cfs_presence_partitions_hateful_only() {
        let msgs = vec![message("a", H, &["x", "y"]), message("b", H, &["z"]), message("c", N, &["w"])];
        let labels: BTreeMap<String, CwLabel> =
            [("a-1", CwLabel::Cfs), ("b-0", CwLabel::Nfs), ("c-0", CwLabel::Cfs)]
                .map(|(k, v)| (k.into(), v))
                .into();
        assert_eq!(cfs_presence(&msgs, &labels), vec![("a".into(), true), ("b".into(), false)]);
    }
}
