//! Test-time prediction and binary classification metrics.
//!
//! Prediction uses only the prior network: `z = μ'(x)` without sampling, then
//! the relation decoder. The posterior is never consulted.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::data::{EncodedInstance, Relation};
use crate::error::{Error, Result};
use crate::model::{decode_relation, encode_prior, ModelParams};
use crate::numerics::DenseVector;

/// Probability of the target relation for one argument pair.
pub fn positive_probability(params: &ModelParams, x1: &DenseVector, x2: &DenseVector) -> Result<f64> {
    let prior = encode_prior(&params.phi, x1, x2)?;
    let y = decode_relation(&params.theta, &prior.mu)?;
    Ok(y[0])
}

/// `true` for the target relation. An exact tie counts as positive.
pub fn predict(params: &ModelParams, inst: &EncodedInstance) -> Result<bool> {
    Ok(label_from_probability(positive_probability(params, &inst.x1, &inst.x2)?))
}

pub fn label_from_probability(p_positive: f64) -> bool {
    p_positive >= 1.0 - p_positive
}

pub fn predict_all(params: &ModelParams, instances: &[EncodedInstance]) -> Result<Vec<bool>> {
    instances.par_iter().map(|inst| predict(params, inst)).collect()
}

pub fn evaluate(params: &ModelParams, instances: &[EncodedInstance]) -> Result<MetricsReport> {
    let predictions = predict_all(params, instances)?;
    let golds: Vec<bool> = instances.iter().map(EncodedInstance::is_positive).collect();
    compute_metrics(&predictions, &golds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub const CSV_HEADER: &'static str = "split,acc,p,r,f1,tp,fp,fn,tn";

    pub fn csv_row(&self, split: &str) -> String {
        format!(
            "{split},{:.2},{:.2},{:.2},{:.2},{},{},{},{}",
            100.0 * self.accuracy,
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Acc {:.2}  P {:.2}  R {:.2}  F1 {:.2}  (tp={} fp={} fn={} tn={})",
            100.0 * self.accuracy,
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }
}

pub fn compute_metrics(predictions: &[bool], golds: &[bool]) -> Result<MetricsReport> {
    if predictions.len() != golds.len() {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} predictions", golds.len()),
            format!("{} predictions", predictions.len()),
        ));
    }
    if golds.is_empty() {
        return Err(Error::Data("cannot compute metrics on an empty set".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in predictions.iter().zip(golds) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, fn_, tn))
}

/// One published result row; values are percentages, `None` when unreported.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceRow {
    pub task: Relation,
    pub system: String,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

const REFERENCE_CSV: &str = include_str!("../data/reference_results.csv");

pub fn parse_reference_rows(text: &str) -> Result<Vec<ReferenceRow>> {
    let mut rows = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, header)) if header.trim() == "task,system,acc,p,r,f1" => {}
        _ => return Err(Error::Data("reference table: missing header".into())),
    }
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |msg: String| Error::Data(format!("reference table line {}: {msg}", idx + 1));
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", fields.len())));
        }
        let value = |s: &str| -> Result<Option<f64>> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("bad number {s:?}")))
            }
        };
        rows.push(ReferenceRow {
            task: fields[0].parse().map_err(bad)?,
            system: fields[1].to_string(),
            accuracy: value(fields[2])?,
            precision: value(fields[3])?,
            recall: value(fields[4])?,
            f1: value(fields[5])?,
        });
    }
    Ok(rows)
}

/// Bundled published results for `task`.
pub fn reference_rows(task: Relation) -> Vec<ReferenceRow> {
    parse_reference_rows(REFERENCE_CSV)
        .expect("bundled reference table parses")
        .into_iter()
        .filter(|r| r.task == task)
        .collect()
}

/// Metrics table for `report` followed by the published rows for `task`.
pub fn render_comparison(task: Relation, label: &str, report: &MetricsReport) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    let mut out = String::new();
    let _ = writeln!(out, "{task} vs Other");
    let _ = writeln!(out, "{:<12} {:>7} {:>7} {:>7} {:>7}", "System", "Acc", "P", "R", "F1");
    let _ = writeln!(
        out,
        "{:<12} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
        label,
        100.0 * report.accuracy,
        100.0 * report.precision,
        100.0 * report.recall,
        100.0 * report.f1
    );
    for row in reference_rows(task) {
        let _ = writeln!(
            out,
            "{:<12} {:>7} {:>7} {:>7} {:>7}",
            format!("{} (ref)", row.system),
            cell(row.accuracy),
            cell(row.precision),
            cell(row.recall),
            cell(row.f1)
        );
    }
    out
}
