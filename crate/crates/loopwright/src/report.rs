//! CSV writers for result, moderation and agreement tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use loopwright_core::experiment::{check_consistency, Condition, ConditionCell, ResultTable, RunMetrics, Stat};
use loopwright_core::metrics::{cohens_kappa, krippendorff_alpha_nominal, AnnotationMatrix, GroupComparison};
use loopwright_core::{CwLabel, MetricError};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("result table disagrees with per-run metrics: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub fn mean_std(s: Stat) -> String {
    format!("{:.3} ± {:.3}", s.mean, s.std)
}

fn signed(x: f64) -> String {
    format!("{x:+.3}")
}

const CONDITIONS: [Condition; 2] = [Condition::WithCw, Condition::WithoutCw];

pub fn results_header() -> Vec<String> {
    let mut h = vec!["Model".to_string()];
    for c in CONDITIONS {
        for m in ["P", "R", "F1"] {
            h.push(format!("{} {m}", c.header()));
        }
    }
    h.push("ΔF1".into());
    h
}

/// Refuses to write a table that does not match `runs`.
pub fn write_results_csv<W: Write>(out: W, table: &ResultTable, runs: &[RunMetrics]) -> Result<(), ReportError> {
    check_consistency(table, runs).map_err(ReportError::Inconsistent)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(results_header())?;
    for row in &table.rows {
        let mut rec = vec![row.label.clone()];
        for c in CONDITIONS {
            match row.cell(c) {
                Some(ConditionCell { precision, recall, f1, .. }) => {
                    rec.extend([mean_std(*precision), mean_std(*recall), mean_std(*f1)]);
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        rec.push(row.delta_f1().map(signed).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One column per dimension, rows as in the published comparison table.
pub fn write_moderation_csv<W: Write>(out: W, rows: &[GroupComparison]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(rows.iter().map(|r| capitalize(&r.dimension)));
    w.write_record(&header)?;
    let (a_name, b_name) = rows
        .first()
        .map(|r| (r.group_a_name.clone(), r.group_b_name.clone()))
        .unwrap_or_default();
    let lines: [(String, fn(&GroupComparison) -> String); 6] = [
        (a_name, |r| format!("{:.3}", r.mean_a)),
        (b_name, |r| format!("{:.3}", r.mean_b)),
        ("Stat".into(), |r| format!("{:.1}", r.u_statistic)),
        ("Stat (group b)".into(), |r| format!("{:.1}", r.u_statistic_b)),
        ("P-value".into(), |r| format!("{:.3}", r.p_value)),
        ("Effect Size".into(), |r| format!("{:.3}", r.effect_size_r)),
    ];
    for (name, f) in lines {
        let mut rec = vec![name];
        rec.extend(rows.iter().map(f));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaRow {
    pub pair: String,
    pub cw3: f64,
    pub cw2: f64,
}

/// Pairwise κ for every rater pair, then α over all raters.
pub fn iaa_table(m: &AnnotationMatrix<CwLabel>) -> Result<Vec<IaaRow>, MetricError> {
    let binary = m.collapsed();
    let raters = m.raters();
    let mut rows = Vec::new();
    for (i, a) in raters.iter().enumerate() {
        for b in &raters[i + 1..] {
            rows.push(IaaRow {
                pair: format!("{} vs {}", a.identifier, b.identifier),
                cw3: cohens_kappa(m, a, b)?,
                cw2: cohens_kappa(&binary, a, b)?,
            });
        }
    }
    rows.push(IaaRow {
        pair: format!("All {} Annotators", raters.len()),
        cw3: krippendorff_alpha_nominal(m)?,
        cw2: krippendorff_alpha_nominal(&binary)?,
    });
    Ok(rows)
}

pub fn write_iaa_csv<W: Write>(out: W, rows: &[IaaRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["Pair", "CW-3 classes", "CW-2 classes"])?;
    for r in rows {
        w.write_record([r.pair.clone(), format!("{:.3}", r.cw3), format!("{:.3}", r.cw2)])?;
    }
    w.flush()?;
    Ok(())
}
