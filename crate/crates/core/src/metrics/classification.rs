use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::label::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: &'static str,
    pub scores: Prf,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 over every member of the label
/// space. Undefined ratios are 0.
pub fn per_class<L: Label>(gold: &[L], pred: &[L]) -> Result<Vec<ClassScores>, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch { left: gold.len(), right: pred.len() });
    }
    if gold.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(L::ALL
        .iter()
        .map(|class| {
            let mut tp = 0;
            let mut fp = 0;
            let mut fneg = 0;
            for (g, p) in gold.iter().zip(pred) {
                match (g == class, p == class) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    (false, false) => {}
                }
            }
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fneg);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores { class: class.name(), scores: Prf { precision, recall, f1 }, support: tp + fneg }
        })
        .collect())
}

/// Macro-averaged precision, recall and F1.
pub fn macro_prf<L: Label>(gold: &[L], pred: &[L]) -> Result<Prf, MetricError> {
    let classes = per_class(gold, pred)?;
    let k = classes.len() as f64;
    let sum = classes.iter().fold(Prf::default(), |acc, c| Prf {
        precision: acc.precision + c.scores.precision,
        recall: acc.recall + c.scores.recall,
        f1: acc.f1 + c.scores.f1,
    });
    Ok(Prf { precision: sum.precision / k, recall: sum.recall / k, f1: sum.f1 / k })
}
