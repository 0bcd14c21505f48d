use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::label::{CwLabel, HsLabel};
use crate::routing::{TripleRun, VariabilityClass};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariabilityRow {
    pub all_equal: usize,
    pub two_equal: usize,
    pub unequal: usize,
}

impl VariabilityRow {
    pub fn total(&self) -> usize {
        self.all_equal + self.two_equal + self.unequal
    }

    pub fn count(&self, class: VariabilityClass) -> usize {
        match class {
            VariabilityClass::AllEqual => self.all_equal,
            VariabilityClass::TwoEqual => self.two_equal,
            VariabilityClass::Unequal => self.unequal,
        }
    }

    pub fn percent(&self, class: VariabilityClass) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            100.0 * self.count(class) as f64 / total as f64
        }
    }

    fn add(&mut self, class: VariabilityClass) {
        match class {
            VariabilityClass::AllEqual => self.all_equal += 1,
            VariabilityClass::TwoEqual => self.two_equal += 1,
            VariabilityClass::Unequal => self.unequal += 1,
        }
    }
}

/// Variability counts per stratum.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariabilityTable {
    pub strata: BTreeMap<String, VariabilityRow>,
}

impl VariabilityTable {
    pub fn overall(&self) -> VariabilityRow {
        self.strata.values().fold(VariabilityRow::default(), |acc, r| VariabilityRow {
            all_equal: acc.all_equal + r.all_equal,
            two_equal: acc.two_equal + r.two_equal,
            unequal: acc.unequal + r.unequal,
        })
    }

    pub fn row(&self, stratum: &str) -> VariabilityRow {
        self.strata.get(stratum).copied().unwrap_or_default()
    }
}

pub fn variability_table<'a>(runs: impl IntoIterator<Item = (&'a str, &'a TripleRun)>) -> VariabilityTable {
    let mut table = VariabilityTable::default();
    for (stratum, run) in runs {
        table.strata.entry(stratum.into()).or_default().add(run.variability());
    }
    table
}

/// Counts in CFS / NFS / UFS column order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub cfs: usize,
    pub nfs: usize,
    pub ufs: usize,
}

impl LabelCounts {
    fn add(&mut self, label: CwLabel) {
        match label {
            CwLabel::Cfs => self.cfs += 1,
            CwLabel::Nfs => self.nfs += 1,
            CwLabel::Ufs => self.ufs += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.cfs + self.nfs + self.ufs
    }

    fn plus(self, other: LabelCounts) -> LabelCounts {
        LabelCounts { cfs: self.cfs + other.cfs, nfs: self.nfs + other.nfs, ufs: self.ufs + other.ufs }
    }
}

/// Check-worthiness labels cross-tabulated by message HS label and, within
/// HS messages, by the claim's own HS label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub hs_claim_non_hateful: LabelCounts,
    pub hs_claim_hateful: LabelCounts,
    /// Claims on HS messages without a claim-level HS label.
    pub hs_claim_unlabeled: LabelCounts,
    pub non_hs: LabelCounts,
}

impl LabelDistribution {
    /// Column sums over all claims on HS messages.
    pub fn hs_total(&self) -> LabelCounts {
        self.hs_claim_non_hateful.plus(self.hs_claim_hateful).plus(self.hs_claim_unlabeled)
    }
}

/// Input items are `(message HS label, claim HS label, final label)`.
pub fn label_distribution(
    finals: impl IntoIterator<Item = (HsLabel, Option<HsLabel>, CwLabel)>,
) -> LabelDistribution {
    let mut dist = LabelDistribution::default();
    for (message_hs, claim_hs, label) in finals {
        let row = match (message_hs, claim_hs) {
            (HsLabel::NonHateful, _) => &mut dist.non_hs,
            (HsLabel::Hateful, Some(HsLabel::Hateful)) => &mut dist.hs_claim_hateful,
            (HsLabel::Hateful, Some(HsLabel::NonHateful)) => &mut dist.hs_claim_non_hateful,
            (HsLabel::Hateful, None) => &mut dist.hs_claim_unlabeled,
        };
        row.add(label);
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::PromptMode;
    use alloc::vec::Vec;
    use CwLabel::*;

    fn run(labels: [CwLabel; 3]) -> TripleRun {
        TripleRun {
            claim_id: "c".into(),
            model: "m".into(),
            prompt_mode: PromptMode::ZeroShot,
            labels,
            raw_outputs: Default::default(),
            retries: [0; 3],
        }
    }

    #[test]
    fn all_equal_only() {
        let runs: Vec<TripleRun> = (0..10).map(|_| run([Cfs, Cfs, Cfs])).collect();
        let t = variability_table(runs.iter().map(|r| ("HS", r)));
        let row = t.row("HS");
        assert_eq!(row.all_equal, 10);
        assert_eq!(row.percent(VariabilityClass::AllEqual), 100.0);
        assert_eq!(row.two_equal + row.unequal, 0);
    }

    #[test]
    fn mixed_counts() {
        let runs = [run([Nfs; 3]), run([Ufs; 3]), run([Cfs; 3]), run([Cfs, Nfs, Ufs])];
        let t = variability_table(runs.iter().map(|r| ("Non-HS", r)));
        let row = t.row("Non-HS");
        assert_eq!(row.percent(VariabilityClass::AllEqual), 75.0);
        assert_eq!(row.percent(VariabilityClass::TwoEqual), 0.0);
        assert_eq!(row.percent(VariabilityClass::Unequal), 25.0);
    }

    #[test]
    fn empty_table() {
        let t = variability_table(core::iter::empty());
        assert_eq!(t.overall(), VariabilityRow::default());
        assert_eq!(t.row("HS").percent(VariabilityClass::AllEqual), 0.0);
    }

    #[test]
    fn distribution_cells() {
        let d = label_distribution([(HsLabel::NonHateful, None, Cfs)]);
        assert_eq!(d.non_hs.cfs, 1);
        assert_eq!(d.non_hs.total() + d.hs_total().total(), 1);
        assert_eq!(label_distribution(core::iter::empty()), LabelDistribution::default());

        let d = label_distribution([
            (HsLabel::Hateful, Some(HsLabel::Hateful), Cfs),
            (HsLabel::Hateful, Some(HsLabel::NonHateful), Ufs),
            (HsLabel::Hateful, None, Nfs),
        ]);
        assert_eq!(d.hs_total(), LabelCounts { cfs: 1, nfs: 1, ufs: 1 });
    }
}
