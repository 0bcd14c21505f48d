//! Human effort accounting: how many claims reached the judge and how the
//! judge's decision related to the labels on the table.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::record::ProvenanceCategory;
use crate::routing::{FinalLabelRecord, RoutingDecision};

/// A count and its percentage of a stated denominator. An empty
/// denominator yields 0%.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub percent: f64,
}

impl Share {
    pub fn of(count: usize, denominator: usize) -> Self {
        let percent = if denominator == 0 { 0.0 } else { 100.0 * count as f64 / denominator as f64 };
        Self { count, percent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEffort {
    pub stratum: String,
    pub total_claims: usize,
    /// Percent of the stratum's claims.
    pub judged: Share,
}

/// `judged` and `accepted` are percentages of all claims; the judge
/// categories are percentages of `judged`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortReport {
    pub total_claims: usize,
    pub judged: Share,
    pub accepted: Share,
    pub judge_sided_human: Share,
    pub judge_sided_llm: Share,
    /// Everything judged that did not side with either annotator. Includes
    /// independent decisions and cases still awaiting the judge.
    pub judge_override: Share,
    pub judge_independent: Share,
    pub awaiting_judge: Share,
    pub strata: Vec<StratumEffort>,
}

impl EffortReport {
    /// Report from aggregate counts alone; the override count is the
    /// remainder `judged - sided_human - sided_llm`.
    pub fn from_counts(total_claims: usize, judged: usize, sided_human: usize, sided_llm: usize) -> Self {
        let overridden = judged.saturating_sub(sided_human + sided_llm);
        Self {
            total_claims,
            judged: Share::of(judged, total_claims),
            accepted: Share::of(total_claims.saturating_sub(judged), total_claims),
            judge_sided_human: Share::of(sided_human, judged),
            judge_sided_llm: Share::of(sided_llm, judged),
            judge_override: Share::of(overridden, judged),
            judge_independent: Share::of(0, judged),
            awaiting_judge: Share::of(0, judged),
            strata: Vec::new(),
        }
    }

    pub fn with_stratum(mut self, stratum: &str, total_claims: usize, judged: usize) -> Self {
        self.strata.push(StratumEffort {
            stratum: stratum.into(),
            total_claims,
            judged: Share::of(judged, total_claims),
        });
        self
    }
}

/// Builds the report from per-claim routing decisions and adjudicated
/// records. `strata` maps every claim of the project to its stratum name;
/// claims without a decision yet count toward the total only.
pub fn effort_report(
    decisions: &BTreeMap<String, RoutingDecision>,
    adjudications: &BTreeMap<String, FinalLabelRecord>,
    strata: &BTreeMap<String, String>,
) -> EffortReport {
    let claims: BTreeSet<&str> = strata
        .keys()
        .chain(decisions.keys())
        .map(String::as_str)
        .collect();
    let total = claims.len();

    let judged_ids: Vec<&str> = decisions
        .iter()
        .filter(|(_, d)| d.needs_judge())
        .map(|(id, _)| id.as_str())
        .collect();
    let judged = judged_ids.len();
    let accepted = decisions.values().filter(|d| !d.needs_judge()).count();

    let mut human = 0;
    let mut llm = 0;
    let mut independent = 0;
    let mut awaiting = 0;
    for id in &judged_ids {
        match adjudications.get(*id).map(|r| r.provenance) {
            Some(ProvenanceCategory::JudgeSidedHuman) => human += 1,
            Some(ProvenanceCategory::JudgeSidedLlm) => llm += 1,
            Some(ProvenanceCategory::JudgeIndependent) => independent += 1,
            Some(ProvenanceCategory::JudgeOverride) | Some(ProvenanceCategory::Accepted) => {}
            None => awaiting += 1,
        }
    }
    let overridden = judged - human - llm;

    let mut per_stratum: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (id, name) in strata {
        let entry = per_stratum.entry(name.as_str()).or_default();
        entry.0 += 1;
        if decisions.get(id).is_some_and(RoutingDecision::needs_judge) {
            entry.1 += 1;
        }
    }

    EffortReport {
        total_claims: total,
        judged: Share::of(judged, total),
        accepted: Share::of(accepted, total),
        judge_sided_human: Share::of(human, judged),
        judge_sided_llm: Share::of(llm, judged),
        judge_override: Share::of(overridden, judged),
        judge_independent: Share::of(independent, judged),
        awaiting_judge: Share::of(awaiting, judged),
        strata: per_stratum
            .into_iter()
            .map(|(name, (n, j))| StratumEffort {
                stratum: name.into(),
                total_claims: n,
                judged: Share::of(j, n),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::CwLabel;
    use crate::routing::NeedsJudgeReason;
    use alloc::format;

    fn round2(x: f64) -> f64 {
        libm::round(x * 100.0) / 100.0
    }

    #[test]
    fn override_is_remainder_of_judged() {
        let r = EffortReport::from_counts(1615, 754, 589, 138);
        assert_eq!(r.judge_override.count, 27);
        assert_eq!(round2(r.judge_override.percent), 3.58);
        assert_eq!(round2(r.judged.percent), 46.69);
        assert_eq!(round2(r.judge_sided_human.percent), 78.12);
        assert_eq!(round2(r.judge_sided_llm.percent), 18.30);
    }

    #[test]
    fn zero_judged_has_no_division_error() {
        let r = EffortReport::from_counts(10, 0, 0, 0);
        assert_eq!(r.judged.percent, 0.0);
        assert_eq!(r.judge_sided_human.percent, 0.0);
        assert_eq!(r.judge_override.percent, 0.0);
        let empty = effort_report(&BTreeMap::new(), &BTreeMap::new(), &BTreeMap::new());
        assert_eq!(empty.total_claims, 0);
        assert_eq!(empty.judged.percent, 0.0);
    }

    #[test]
    fn hs_stratum_share() {
        let r = EffortReport::from_counts(1615, 754, 589, 138).with_stratum("HS", 633, 257);
        assert_eq!(round2(r.strata[0].judged.percent), 40.60);
    }

    #[test]
    fn counts_categories_from_records() {
        let mut decisions = BTreeMap::new();
        let mut finals = BTreeMap::new();
        let mut strata = BTreeMap::new();
        let cases = [
            ("a", None),
            ("b", Some(ProvenanceCategory::JudgeSidedHuman)),
            ("c", Some(ProvenanceCategory::JudgeSidedLlm)),
            ("d", Some(ProvenanceCategory::JudgeOverride)),
            ("e", Some(ProvenanceCategory::JudgeIndependent)),
        ];
        for (id, prov) in cases {
            let decision = match prov {
                None => RoutingDecision::Accepted { label: CwLabel::Cfs },
                Some(_) => RoutingDecision::NeedsJudge { reason: NeedsJudgeReason::Conflict },
            };
            decisions.insert(id.into(), decision);
            if let Some(p) = prov {
                finals.insert(
                    id.into(),
                    FinalLabelRecord { claim_id: id.into(), gold: CwLabel::Ufs, provenance: p, platinum: None },
                );
            }
            strata.insert(id.into(), "HS".into());
        }
        decisions.insert("f".into(), RoutingDecision::NeedsJudge { reason: NeedsJudgeReason::NoMajority });
        strata.insert("f".into(), "Non-HS".into());
        strata.insert("g".into(), "Non-HS".into());

        let r = effort_report(&decisions, &finals, &strata);
        assert_eq!(r.total_claims, 7);
        assert_eq!(r.judged.count, 5);
        assert_eq!(r.accepted.count, 1);
        assert_eq!(r.judge_sided_human.count, 1);
        assert_eq!(r.judge_sided_llm.count, 1);
        assert_eq!(r.judge_independent.count, 1);
        assert_eq!(r.awaiting_judge.count, 1);
        assert_eq!(r.judge_override.count, 3, "{}", format!("{r:?}"));
        assert_eq!(r.strata.len(), 2);
        assert_eq!(r.strata[0].stratum, "HS");
        assert_eq!(r.strata[0].judged.count, 4);
        assert_eq!(r.strata[1].judged.count, 1);
    }
}
