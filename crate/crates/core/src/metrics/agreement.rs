use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::MetricError;
use crate::label::{collapse_binary, BinaryCwLabel, CwLabel, Label};
use crate::record::AnnotatorRef;

/// Items × raters grid of optional labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMatrix<L: Label> {
    items: Vec<String>,
    raters: Vec<AnnotatorRef>,
    /// Row-major: `cells[item][rater]`.
    cells: Vec<Vec<Option<L>>>,
}

impl<L: Label> AnnotationMatrix<L> {
    pub fn new(items: Vec<String>, raters: Vec<AnnotatorRef>) -> Result<Self, MetricError> {
        if raters.len() < 2 {
            return Err(MetricError::TooFewRaters);
        }
        let cells = vec![vec![None; raters.len()]; items.len()];
        Ok(Self { items, raters, cells })
    }

    /// Builds a matrix from one label sequence per rater, all over the same
    /// items.
    pub fn from_columns(
        items: Vec<String>,
        columns: Vec<(AnnotatorRef, Vec<Option<L>>)>,
    ) -> Result<Self, MetricError> {
        let raters = columns.iter().map(|(r, _)| r.clone()).collect();
        let mut m = Self::new(items, raters)?;
        for (j, (_, col)) in columns.into_iter().enumerate() {
            if col.len() != m.items.len() {
                return Err(MetricError::LengthMismatch { left: m.items.len(), right: col.len() });
            }
            for (i, cell) in col.into_iter().enumerate() {
                m.cells[i][j] = cell;
            }
        }
        Ok(m)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn raters(&self) -> &[AnnotatorRef] {
        &self.raters
    }

    pub fn rater_index(&self, rater: &AnnotatorRef) -> Result<usize, MetricError> {
        self.raters
            .iter()
            .position(|r| r == rater)
            .ok_or_else(|| MetricError::UnknownRater(alloc::format!("{rater}")))
    }

    pub fn set(&mut self, item: &str, rater: &AnnotatorRef, label: L) -> Result<(), MetricError> {
        let j = self.rater_index(rater)?;
        let i = self
            .items
            .iter()
            .position(|it| it == item)
            .ok_or_else(|| MetricError::UnknownItem(item.into()))?;
        self.cells[i][j] = Some(label);
        Ok(())
    }

    pub fn get(&self, item: usize, rater: usize) -> Option<L> {
        self.cells.get(item).and_then(|row| row.get(rater)).copied().flatten()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Option<L>]> {
        self.cells.iter().map(Vec::as_slice)
    }

    pub fn map_labels<M: Label>(&self, f: impl Fn(L) -> M) -> AnnotationMatrix<M> {
        AnnotationMatrix {
            items: self.items.clone(),
            raters: self.raters.clone(),
            cells: self.cells.iter().map(|row| row.iter().map(|c| c.map(&f)).collect()).collect(),
        }
    }

    fn common(&self, a: usize, b: usize) -> Vec<(L, L)> {
        self.cells
            .iter()
            .filter_map(|row| Some((row[a]?, row[b]?)))
            .collect()
    }
}

impl AnnotationMatrix<CwLabel> {
    pub fn collapsed(&self) -> AnnotationMatrix<BinaryCwLabel> {
        self.map_labels(collapse_binary)
    }
}

/// Share of commonly labeled items on which the two raters agree.
pub fn percent_agreement<L: Label>(
    m: &AnnotationMatrix<L>,
    rater_a: &AnnotatorRef,
    rater_b: &AnnotatorRef,
) -> Result<f64, MetricError> {
    let pairs = m.common(m.rater_index(rater_a)?, m.rater_index(rater_b)?);
    if pairs.is_empty() {
        return Err(MetricError::NoCommonItems);
    }
    let agree = pairs.iter().filter(|(a, b)| a == b).count();
    Ok(agree as f64 / pairs.len() as f64)
}

/// Cohen's κ with per-rater marginals.
pub fn cohens_kappa<L: Label>(
    m: &AnnotationMatrix<L>,
    rater_a: &AnnotatorRef,
    rater_b: &AnnotatorRef,
) -> Result<f64, MetricError> {
    let pairs = m.common(m.rater_index(rater_a)?, m.rater_index(rater_b)?);
    kappa_from_pairs(&pairs)
}

pub(crate) fn kappa_from_pairs<L: Label>(pairs: &[(L, L)]) -> Result<f64, MetricError> {
    if pairs.len() < 2 {
        return Err(MetricError::InsufficientItems { needed: 2, found: pairs.len() });
    }
    let n = pairs.len() as f64;
    let k = L::ALL.len();
    let mut marg_a = vec![0usize; k];
    let mut marg_b = vec![0usize; k];
    let mut agree = 0usize;
    for (a, b) in pairs {
        marg_a[a.position()] += 1;
        marg_b[b.position()] += 1;
        if a == b {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg_a
        .iter()
        .zip(&marg_b)
        .map(|(x, y)| (*x as f64 / n) * (*y as f64 / n))
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(MetricError::DegenerateDistribution);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Krippendorff's α for nominal data via the coincidence matrix. Units
/// with fewer than two ratings are not pairable and are skipped.
pub fn krippendorff_alpha_nominal<L: Label>(m: &AnnotationMatrix<L>) -> Result<f64, MetricError> {
    let k = L::ALL.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for row in m.rows() {
        let values: Vec<usize> = row.iter().flatten().map(|l| l.position()).collect();
        let m_u = values.len();
        if m_u < 2 {
            continue;
        }
        let weight = 1.0 / (m_u as f64 - 1.0);
        for (i, c) in values.iter().enumerate() {
            for (j, d) in values.iter().enumerate() {
                if i != j {
                    coincidence[*c][*d] += weight;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return Err(MetricError::UndefinedAlpha);
    }

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected <= 0.0 {
        return Err(MetricError::UndefinedAlpha);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// κ between the gold and platinum tracks over three classes and after
/// binary collapse.
pub fn compare_tracks(
    gold: &BTreeMap<String, CwLabel>,
    platinum: &BTreeMap<String, CwLabel>,
) -> Result<(f64, f64), MetricError> {
    let mismatched: Vec<String> = gold
        .keys()
        .filter(|k| !platinum.contains_key(*k))
        .chain(platinum.keys().filter(|k| !gold.contains_key(*k)))
        .cloned()
        .collect();
    if !mismatched.is_empty() {
        return Err(MetricError::ItemSetMismatch(mismatched));
    }
    let pairs: Vec<(CwLabel, CwLabel)> = gold.iter().map(|(k, g)| (*g, platinum[k])).collect();
    let binary: Vec<(BinaryCwLabel, BinaryCwLabel)> = pairs
        .iter()
        .map(|(g, p)| (collapse_binary(*g), collapse_binary(*p)))
        .collect();
    Ok((kappa_from_pairs(&pairs)?, kappa_from_pairs(&binary)?))
}
