//! Span-level precision, recall and F1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::conll::{parse_rows, Bio, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntitySpan {
    pub entity_type: String,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            entity_type: entity_type.into(),
            start,
            end,
        }
    }
}

/// Maximal `B-X (I-X)*` runs. An `I-X` that does not continue an `X` span
/// opens a new one, so ill-formed input still yields spans.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> BTreeSet<EntitySpan> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, label) in labels.iter().enumerate() {
        let bio = Bio::parse(label.as_ref()).unwrap_or(Bio::Outside);
        let continues = matches!((bio, open), (Bio::Inside(t), Some((o, _))) if t == o);
        if continues {
            continue;
        }
        if let Some((ty, start)) = open.take() {
            spans.insert(EntitySpan::new(ty, start, i - 1));
        }
        open = bio.entity_type().map(|t| (t, i));
    }
    if let Some((ty, start)) = open {
        spans.insert(EntitySpan::new(ty, start, labels.len() - 1));
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Number of gold spans.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// Per entity type, sorted by name.
    pub per_type: BTreeMap<String, Counts>,
    pub micro: Counts,
    /// Token-level label accuracy, for debugging only.
    pub token_accuracy: f64,
}

impl EvalReport {
    pub fn precision(&self) -> f64 {
        self.micro.precision()
    }

    pub fn recall(&self) -> f64 {
        self.micro.recall()
    }

    pub fn f1(&self) -> f64 {
        self.micro.f1()
    }

    /// Mean per-type F1 over types with gold support.
    pub fn macro_f1(&self) -> f64 {
        let supported: Vec<f64> = self
            .per_type
            .values()
            .filter(|c| c.support() > 0)
            .map(Counts::f1)
            .collect();
        if supported.is_empty() {
            0.0
        } else {
            supported.iter().sum::<f64>() / supported.len() as f64
        }
    }

    /// `(name, value)` rows: `P-X`, `R-X`, `F1-X` per type, then
    /// `Precision`, `Recall`, `F1` and `Macro-F1`.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = Vec::new();
        for (ty, c) in &self.per_type {
            rows.push((format!("P-{ty}"), c.precision()));
            rows.push((format!("R-{ty}"), c.recall()));
            rows.push((format!("F1-{ty}"), c.f1()));
        }
        rows.push(("Precision".into(), self.precision()));
        rows.push(("Recall".into(), self.recall()));
        rows.push(("F1".into(), self.f1()));
        rows.push(("Macro-F1".into(), self.macro_f1()));
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Human,
    Tsv,
}

/// Human form is a two-column table with a support column on per-type
/// rows; TSV is one `name<TAB>value` per line plus `Support-X` counts.
pub fn report_render(report: &EvalReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Human => {
            let _ = writeln!(out, "{:<14}{:<22}Support", "Metric", "Value");
            for (name, value) in report.rows() {
                let support = name
                    .split_once('-')
                    .filter(|(m, _)| matches!(*m, "P" | "R" | "F1"))
                    .and_then(|(_, ty)| report.per_type.get(ty))
                    .map(|c| c.support().to_string())
                    .unwrap_or_default();
                let line = format!("{name:<14}{value:<22}{support}");
                let _ = writeln!(out, "{}", line.trim_end());
            }
        }
        ReportFormat::Tsv => {
            for (name, value) in report.rows() {
                let _ = writeln!(out, "{name}\t{value}");
            }
            for (ty, c) in &report.per_type {
                let _ = writeln!(out, "Support-{ty}\t{}", c.support());
            }
        }
    }
    out
}

/// Scores predicted label sequences against gold sentences.
pub fn evaluate<S: AsRef<str>>(gold: &[Sentence], predicted: &[Vec<S>]) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::Invalid(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut report = EvalReport::default();
    let mut tokens = 0usize;
    let mut correct = 0usize;
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        let g_labels = g
            .labels()
            .ok_or_else(|| Error::Invalid(format!("sentence {i}: gold token without label")))?;
        if g_labels.len() != p.len() {
            return Err(Error::Invalid(format!(
                "sentence {i}: {} gold labels but {} predicted",
                g_labels.len(),
                p.len()
            )));
        }
        tokens += p.len();
        correct += g_labels.iter().zip(p).filter(|(a, b)| **a == b.as_ref()).count();
        score_sentence(&mut report, &extract_spans(&g_labels), &extract_spans(p));
    }
    for c in report.per_type.values() {
        report.micro.tp += c.tp;
        report.micro.fp += c.fp;
        report.micro.fn_ += c.fn_;
    }
    report.token_accuracy = ratio(correct, tokens);
    Ok(report)
}

fn score_sentence(report: &mut EvalReport, gold: &BTreeSet<EntitySpan>, pred: &BTreeSet<EntitySpan>) {
    for span in pred {
        let c = report.per_type.entry(span.entity_type.clone()).or_default();
        if gold.contains(span) {
            c.tp += 1;
        } else {
            c.fp += 1;
        }
    }
    for span in gold.difference(pred) {
        report.per_type.entry(span.entity_type.clone()).or_default().fn_ += 1;
    }
}

/// Reads a file whose last two columns are the gold and predicted labels.
pub fn parse_paired(text: &str) -> Result<(Vec<Sentence>, Vec<Vec<String>>)> {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for rows in parse_rows(text) {
        let mut tokens = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (line, fields) in rows {
            if fields.len() < 3 {
                return Err(Error::parse(line, "expected surface, gold and predicted columns"));
            }
            let n = fields.len();
            tokens.push(crate::conll::Token::new(fields[0]).with_label(fields[n - 2]));
            labels.push(fields[n - 1].to_string());
        }
        gold.push(Sentence::new(tokens));
        pred.push(labels);
    }
    Ok((gold, pred))
}
