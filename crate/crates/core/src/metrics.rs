//! Classification and text-overlap metrics.
//!
//! Ratios with a zero denominator are undefined (`None`) and print as
//! `n/a`, so they never drag an average down silently.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Counts from aligned predicted and true labels (`true` = positive).
    pub fn from_labels(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(c: &ConfusionCounts) -> ConfusionMetrics {
    ConfusionMetrics {
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        precision: ratio(c.tp, c.tp + c.fp),
    }
}

/// Formats a metric with four decimals, or `n/a` when undefined.
pub struct Metric(pub Option<f64>);

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.4}"),
            None => f.write_str("n/a"),
        }
    }
}

fn ngrams<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    out
}

fn clipped_overlap(cand: &HashMap<Vec<&str>, usize>, reference: &HashMap<Vec<&str>, usize>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Clipped `n`-gram precision of `candidate` times the brevity penalty
/// `exp(min(0, 1 − |ref| / |cand|))`. A candidate without `n`-grams
/// scores 0.
pub fn bleu_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    let cand = ngrams(candidate, n);
    let total: usize = cand.values().sum();
    if total == 0 {
        return 0.0;
    }
    let precision = clipped_overlap(&cand, &ngrams(reference, n)) as f64 / total as f64;
    let bp = (1.0 - reference.len() as f64 / candidate.len() as f64).min(0.0).exp();
    (precision * bp).clamp(0.0, 1.0)
}

/// `n`-gram recall of `candidate` against `reference`, with clipping.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    let reference = ngrams(reference, n);
    let total: usize = reference.values().sum();
    if total == 0 {
        return 0.0;
    }
    (clipped_overlap(&ngrams(candidate, n), &reference) as f64 / total as f64).clamp(0.0, 1.0)
}

pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure: `2RP / (R + P)` with `R = LCS/|ref|`, `P = LCS/|cand|`.
pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let r = lcs as f64 / reference.len() as f64;
    let p = lcs as f64 / candidate.len() as f64;
    (2.0 * r * p / (r + p)).clamp(0.0, 1.0)
}

/// Overlap scores of one candidate against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScores {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
}

pub fn text_scores(candidate: &str, reference: &str) -> TextScores {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    TextScores {
        bleu_1: bleu_n(&c, &r, 1),
        bleu_2: bleu_n(&c, &r, 2),
        rouge_1: rouge_n(&c, &r, 1),
        rouge_2: rouge_n(&c, &r, 2),
        rouge_l: rouge_l(&c, &r),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub confusion: Option<ConfusionCounts>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub bleu_1: Option<f64>,
    pub bleu_2: Option<f64>,
    pub rouge_1: Option<f64>,
    pub rouge_2: Option<f64>,
    pub rouge_l: Option<f64>,
}

/// One evaluated item: text plus an optional binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

/// Mean text scores over aligned pairs, plus confusion metrics over the
/// pairs where both sides carry a label.
pub fn evaluate(references: &[EvalItem], candidates: &[EvalItem]) -> EvalReport {
    let pairs = references.len().min(candidates.len());
    let scores: Vec<TextScores> = references
        .iter()
        .zip(candidates)
        .map(|(r, c)| text_scores(&c.text, &r.text))
        .collect();
    let mean = |f: fn(&TextScores) -> f64| (pairs > 0).then(|| scores.iter().map(f).sum::<f64>() / pairs as f64);
    let (pred, actual): (Vec<bool>, Vec<bool>) = references
        .iter()
        .zip(candidates)
        .filter_map(|(r, c)| Some((c.label?, r.label?)))
        .unzip();
    let confusion = (!pred.is_empty()).then(|| ConfusionCounts::from_labels(&pred, &actual));
    let m = confusion.as_ref().map(confusion_metrics);
    EvalReport {
        pairs,
        confusion,
        sensitivity: m.and_then(|m| m.sensitivity),
        specificity: m.and_then(|m| m.specificity),
        precision: m.and_then(|m| m.precision),
        bleu_1: mean(|s| s.bleu_1),
        bleu_2: mean(|s| s.bleu_2),
        rouge_1: mean(|s| s.rouge_1),
        rouge_2: mean(|s| s.rouge_2),
        rouge_l: mean(|s| s.rouge_l),
    }
}
