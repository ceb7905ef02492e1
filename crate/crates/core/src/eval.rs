//! Class-wise precision/recall/F1, macro-F1 and run comparison tables.
//!
//! Any ratio with a zero denominator is 0, so a class that is never
//! predicted (or never present) scores F1 = 0 rather than NaN.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Counts indexed `[gold][predicted]` in [`Label::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, gold: Label, predicted: Label) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }
}

pub fn confusion(gold: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut m = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(predicted) {
        m.counts[g.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Unweighted mean of the three class F1 scores.
pub fn macro_average(class_f1: [f64; 3]) -> f64 {
    class_f1.iter().sum::<f64>() / 3.0
}

/// Descriptive fields carried alongside the numbers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_name: String,
    pub strategy: String,
    pub model: String,
    pub parser_fallback_rate: f64,
    /// Claims scored.
    pub evaluated: usize,
    /// Claims skipped because no evidence was available.
    pub excluded_no_evidence: usize,
    /// Claims skipped because generation failed.
    pub excluded_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: RunMeta,
    pub per_class: [ClassMetrics; 3],
    pub macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

impl EvaluationReport {
    /// Builds a report from already-computed class metrics (e.g. a published table).
    pub fn from_class_metrics(meta: RunMeta, per_class: [ClassMetrics; 3]) -> Self {
        let macro_f1 = macro_average(per_class.map(|c| c.f1));
        EvaluationReport {
            meta,
            per_class,
            macro_f1,
            confusion: None,
        }
    }

    pub fn with_meta(mut self, meta: RunMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.per_class[label.index()]
    }
}

pub fn metrics_from_confusion(m: &ConfusionMatrix) -> Result<EvaluationReport> {
    if m.total() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let per_class = Label::ALL.map(|label| {
        let i = label.index();
        let tp = m.counts[i][i];
        let predicted: u64 = (0..3).map(|g| m.counts[g][i]).sum();
        let support: u64 = m.counts[i].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        ClassMetrics {
            label,
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
        }
    });
    let mut report = EvaluationReport::from_class_metrics(RunMeta::default(), per_class);
    report.confusion = Some(*m);
    Ok(report)
}

pub fn evaluate(gold: &[Label], predicted: &[Label]) -> Result<EvaluationReport> {
    metrics_from_confusion(&confusion(gold, predicted)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run_name: String,
    pub strategy: String,
    pub model: String,
    pub true_f1: f64,
    pub false_f1: f64,
    pub conflicting_f1: f64,
    pub macro_f1: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

/// Rows ordered by macro-F1 (highest first), ties by run name. Every row
/// sharing the top macro-F1 is flagged `best`.
pub fn compare_runs(reports: &[EvaluationReport]) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            run_name: r.meta.run_name.clone(),
            strategy: r.meta.strategy.clone(),
            model: r.meta.model.clone(),
            true_f1: r.class(Label::True).f1,
            false_f1: r.class(Label::False).f1,
            conflicting_f1: r.class(Label::Conflicting).f1,
            macro_f1: r.macro_f1,
            best: false,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.macro_f1
            .partial_cmp(&a.macro_f1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.run_name.cmp(&b.run_name))
    });
    if let Some(top) = rows.first().map(|r| r.macro_f1) {
        for row in rows.iter_mut().filter(|r| r.macro_f1 == top) {
            row.best = true;
        }
    }
    ComparisonTable {
        rows,
        failures: Vec::new(),
    }
}

impl ComparisonTable {
    /// Aligned plain-text rendering; values rounded to `decimals` places.
    pub fn render(&self, decimals: usize) -> String {
        let header = [
            "Run",
            "Strategy",
            "Model",
            "True-F1",
            "False-F1",
            "Conflicting-F1",
            "Macro-F1",
        ];
        let mut cells: Vec<[String; 7]> = vec![header.map(String::from)];
        for row in &self.rows {
            let mark = if row.best { "*" } else { "" };
            cells.push([
                row.run_name.clone(),
                row.strategy.clone(),
                row.model.clone(),
                format!("{:.*}", decimals, row.true_f1),
                format!("{:.*}", decimals, row.false_f1),
                format!("{:.*}", decimals, row.conflicting_f1),
                format!("{:.*}{mark}", decimals, row.macro_f1),
            ]);
        }
        let widths: Vec<usize> = (0..7)
            .map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| if c < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        for failure in &self.failures {
            let _ = writeln!(out, "failed: {failure}");
        }
        out
    }
}

/// Human-readable summary of a single report.
pub fn render_report(report: &EvaluationReport, decimals: usize) -> String {
    let mut out = String::new();
    let m = &report.meta;
    let _ = writeln!(out, "run: {}  strategy: {}  model: {}", m.run_name, m.strategy, m.model);
    let _ = writeln!(
        out,
        "evaluated: {}  excluded (no evidence): {}  excluded (generation failed): {}  parser fallback rate: {:.*}",
        m.evaluated, m.excluded_no_evidence, m.excluded_failed, decimals, m.parser_fallback_rate
    );
    let _ = writeln!(
        out,
        "{:<12} {:>9} {:>9} {:>9} {:>8}",
        "label", "precision", "recall", "f1", "support"
    );
    for c in &report.per_class {
        let _ = writeln!(
            out,
            "{:<12} {:>9.*} {:>9.*} {:>9.*} {:>8}",
            c.label.as_str(),
            decimals,
            c.precision,
            decimals,
            c.recall,
            decimals,
            c.f1,
            c.support
        );
    }
    let _ = writeln!(out, "macro-F1: {:.*}", decimals, report.macro_f1);
    if let Some(cm) = &report.confusion {
        let _ = writeln!(out, "confusion (rows gold, cols predicted): True/False/Conflicting");
        for (label, row) in Label::ALL.iter().zip(cm.counts) {
            let _ = writeln!(out, "{:<12} {:>6} {:>6} {:>6}", label.as_str(), row[0], row[1], row[2]);
        }
    }
    out
}
