//! Response quality assessment and the generate, assess, adjust,
//! regenerate loop.
//!
//! Five dimensions, each in `[0, 1]`:
//!
//! * accuracy: citations of background codes over all citation-like
//!   fragments (1 when there are no fragments and no background);
//! * comprehensiveness: background codes cited over background size;
//! * citation: well-formed fragments over all fragments (1 when none);
//! * logic: mean similarity of adjacent paragraphs, cosine mapped to
//!   `(c + 1) / 2` with an embedder, token Jaccard without one;
//! * expression: share of legal-lexicon tokens, `min(1, share / 0.2)`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::citation_fragments;
use crate::graph::KnowledgeGraph;
use crate::prompt::{Adjustment, GuidanceBlock, PromptDocument, Toggle};
use crate::provider::{CompletionProvider, ProviderError, TextEmbedder};
use crate::text::tokenize;

const WEIGHT_EPS: f64 = 1e-9;

/// Lexicon share at which expression saturates.
pub const EXPRESSION_SATURATION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("invalid quality configuration: {0}")]
    Config(String),
    #[error("provider failed after {} completed iteration(s): {source}", trace.len())]
    Provider {
        trace: Vec<Iteration>,
        #[source]
        source: ProviderError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityWeights {
    pub accuracy: f64,
    pub comprehensiveness: f64,
    pub citation: f64,
    pub logic: f64,
    pub expression: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights {
            accuracy: 0.2,
            comprehensiveness: 0.2,
            citation: 0.2,
            logic: 0.2,
            expression: 0.2,
        }
    }
}

impl QualityWeights {
    fn as_array(&self) -> [f64; 5] {
        [self.accuracy, self.comprehensiveness, self.citation, self.logic, self.expression]
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        let w = self.as_array();
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(QualityError::Config(format!("negative or non-finite weight in {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_EPS {
            return Err(QualityError::Config(format!("quality weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub accuracy: f64,
    pub comprehensiveness: f64,
    pub citation: f64,
    pub logic: f64,
    pub expression: f64,
}

impl QualityScores {
    pub fn as_array(&self) -> [f64; 5] {
        [self.accuracy, self.comprehensiveness, self.citation, self.logic, self.expression]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deficiency {
    LowAccuracy,
    LowComprehensiveness,
    LowCitation,
    LowLogic,
    LowExpression,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    Low { dimension: Deficiency },
    MalformedCitation { fragment: String },
    UnknownCitation { code: String },
    /// A real code that was not part of the prompt's background.
    OffBackgroundCitation { code: String },
    UncitedBackground { code: String },
    NoApplicableRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub scores: QualityScores,
    pub total: f64,
    pub threshold: f64,
    pub pass: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl QualityReport {
    pub fn deficiencies(&self) -> impl Iterator<Item = Deficiency> + '_ {
        self.diagnostics.iter().filter_map(|d| match d {
            Diagnostic::Low { dimension } => Some(*dimension),
            _ => None,
        })
    }
}

/// True iff `fragment` is `[CODE]` with `CODE` a normalized code of `g`.
pub fn validate_citation(fragment: &str, g: &KnowledgeGraph) -> bool {
    let frags = citation_fragments(fragment);
    match frags.as_slice() {
        [f] if f.text == fragment => f.code().is_some_and(|c| g.has_code(c)),
        _ => false,
    }
}

fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(cur.join("\n"));
    }
    out
}

/// Scores responses against the prompt they answer.
pub struct Assessor<'a> {
    pub graph: &'a KnowledgeGraph,
    pub weights: QualityWeights,
    pub threshold: f64,
    /// Dimensions scoring below this are reported as deficient.
    pub dimension_floor: f64,
    pub lexicon: HashSet<String>,
    pub embedder: Option<&'a dyn TextEmbedder>,
}

impl<'a> Assessor<'a> {
    pub fn new(graph: &'a KnowledgeGraph, lexicon: HashSet<String>) -> Self {
        Assessor {
            graph,
            weights: QualityWeights::default(),
            threshold: 0.7,
            dimension_floor: 0.6,
            lexicon,
            embedder: None,
        }
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        self.weights.validate()?;
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(QualityError::Config(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.dimension_floor) {
            return Err(QualityError::Config(format!(
                "dimension floor {} outside [0, 1]",
                self.dimension_floor
            )));
        }
        Ok(())
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        if let Some(e) = self.embedder {
            if let (Ok(x), Ok(y)) = (e.embed(a), e.embed(b)) {
                let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nx > 0.0 && ny > 0.0 && x.len() == y.len() {
                    return ((dot / (nx * ny) + 1.0) / 2.0).clamp(0.0, 1.0);
                }
            }
        }
        let ta: HashSet<String> = tokenize(a).into_iter().collect();
        let tb: HashSet<String> = tokenize(b).into_iter().collect();
        crate::text::jaccard(&ta, &tb)
    }

    pub fn assess(&self, response: &str, prompt: &PromptDocument) -> QualityReport {
        let background: Vec<&str> = prompt.background_codes();
        let bg_set: HashSet<&str> = background.iter().copied().collect();
        let frags = citation_fragments(response);
        let mut diagnostics = BTreeSet::new();

        let mut well_formed = 0usize;
        let mut valid = 0usize;
        let mut cited: HashSet<&str> = HashSet::new();
        for f in &frags {
            match f.code() {
                Some(code) => {
                    well_formed += 1;
                    if bg_set.contains(code) {
                        valid += 1;
                        cited.insert(code);
                    } else if self.graph.has_code(code) {
                        diagnostics.insert(Diagnostic::OffBackgroundCitation { code: code.to_string() });
                    } else {
                        diagnostics.insert(Diagnostic::UnknownCitation { code: code.to_string() });
                    }
                }
                None => {
                    diagnostics.insert(Diagnostic::MalformedCitation {
                        fragment: f.text.to_string(),
                    });
                }
            }
        }
        for code in &background {
            if !cited.contains(code) {
                diagnostics.insert(Diagnostic::UncitedBackground { code: code.to_string() });
            }
        }

        let accuracy = match (frags.len(), bg_set.is_empty()) {
            (0, true) => 1.0,
            (0, false) => 0.0,
            (n, _) => valid as f64 / n as f64,
        };
        let comprehensiveness = if bg_set.is_empty() {
            1.0
        } else {
            cited.len() as f64 / bg_set.len() as f64
        };
        let citation = if frags.is_empty() {
            1.0
        } else {
            well_formed as f64 / frags.len() as f64
        };
        let paras = paragraphs(response);
        let logic = if paras.len() < 2 {
            0.0
        } else {
            paras.windows(2).map(|w| self.similarity(&w[0], &w[1])).sum::<f64>() / (paras.len() - 1) as f64
        };
        let tokens = tokenize(response);
        let expression = if tokens.is_empty() {
            0.0
        } else {
            let share = tokens.iter().filter(|t| self.lexicon.contains(*t)).count() as f64 / tokens.len() as f64;
            (share / EXPRESSION_SATURATION).min(1.0)
        };

        let scores = QualityScores {
            accuracy,
            comprehensiveness,
            citation,
            logic,
            expression,
        };
        let dims = [
            Deficiency::LowAccuracy,
            Deficiency::LowComprehensiveness,
            Deficiency::LowCitation,
            Deficiency::LowLogic,
            Deficiency::LowExpression,
        ];
        for (d, s) in dims.into_iter().zip(scores.as_array()) {
            if s < self.dimension_floor {
                diagnostics.insert(Diagnostic::Low { dimension: d });
            }
        }
        let xs = scores.as_array();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total = xs
            .iter()
            .zip(self.weights.as_array())
            .map(|(s, w)| s * w)
            .sum::<f64>()
            .clamp(lo, hi);
        QualityReport {
            scores,
            total,
            threshold: self.threshold,
            pass: total >= self.threshold,
            diagnostics: diagnostics.into_iter().collect(),
        }
    }
}

/// Convenience wrapper over [`Assessor::assess`].
pub fn assess_quality(response: &str, prompt: &PromptDocument, assessor: &Assessor<'_>) -> QualityReport {
    assessor.assess(response, prompt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustmentRule {
    pub when: Deficiency,
    pub then: Adjustment,
}

pub fn default_rules() -> Vec<AdjustmentRule> {
    use Adjustment::*;
    use Deficiency::*;
    [
        (LowComprehensiveness, ExpandBackground),
        (LowCitation, CitationFormat),
        (LowAccuracy, CitationFormat),
        (LowLogic, StepEnumeration),
    ]
    .into_iter()
    .map(|(when, then)| AdjustmentRule { when, then })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    pub max_iterations: usize,
    /// Entries added to the background by one expansion.
    pub expand_step: usize,
    pub rules: Vec<AdjustmentRule>,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            max_iterations: 3,
            expand_step: 2,
            rules: default_rules(),
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<(), QualityError> {
        if self.max_iterations == 0 {
            return Err(QualityError::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one adjustment pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjusted {
    pub prompt: PromptDocument,
    pub applied: Vec<Adjustment>,
    pub diagnostics: Vec<Diagnostic>,
}

fn apply(prompt: &mut PromptDocument, a: Adjustment, expand_step: usize) -> bool {
    if prompt.adjustments.contains(&a) {
        return false;
    }
    let changed = match a {
        Adjustment::ExpandBackground => {
            if !prompt.is_enabled(Toggle::Kb) || prompt.reserve.is_empty() || expand_step == 0 {
                false
            } else {
                let take = expand_step.min(prompt.reserve.len());
                let moved: Vec<_> = prompt.reserve.drain(..take).collect();
                prompt.knowledge_background.extend(moved);
                true
            }
        }
        Adjustment::CitationFormat => add_block(prompt, GuidanceBlock::CitationFormat),
        Adjustment::StepEnumeration => add_block(prompt, GuidanceBlock::StepEnumeration),
    };
    if changed {
        prompt.adjustments.push(a);
    }
    changed
}

fn add_block(prompt: &mut PromptDocument, b: GuidanceBlock) -> bool {
    if prompt.guidance_blocks.contains(&b) {
        return false;
    }
    prompt.guidance_blocks.push(b);
    true
}

/// Applies, for each deficiency in `report`, the first matching rule of
/// `cfg`. An adjustment already made to this prompt is not made again.
/// When nothing changes the prompt is returned as is, with a
/// [`Diagnostic::NoApplicableRule`] note.
pub fn adjust_prompt(prompt: &PromptDocument, report: &QualityReport, cfg: &OptimizationConfig) -> Adjusted {
    let mut out = prompt.clone();
    let mut applied = Vec::new();
    for d in report.deficiencies() {
        if let Some(rule) = cfg.rules.iter().find(|r| r.when == d) {
            if apply(&mut out, rule.then, cfg.expand_step) {
                applied.push(rule.then);
            }
        }
    }
    let diagnostics = if applied.is_empty() {
        vec![Diagnostic::NoApplicableRule]
    } else {
        Vec::new()
    };
    Adjusted {
        prompt: out,
        applied,
        diagnostics,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub index: usize,
    pub prompt: String,
    pub response: String,
    pub report: QualityReport,
    /// Adjustments made after this iteration's assessment.
    pub adjustments: Vec<Adjustment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimized {
    pub response: String,
    pub report: QualityReport,
    pub prompt: PromptDocument,
    /// Index of the returned iteration within `trace`.
    pub selected: usize,
    pub trace: Vec<Iteration>,
}

impl Optimized {
    pub fn provider_calls(&self) -> usize {
        self.trace.len()
    }
}

/// Generates, assesses and, while the verdict is fail, adjusts and
/// regenerates. Stops at the first pass or after `max_iterations` provider
/// calls (a single call when the prompt has DO disabled), returning the best
/// iteration by total; the earliest wins ties.
pub fn optimize(
    prompt: PromptDocument,
    provider: &dyn CompletionProvider,
    assessor: &Assessor<'_>,
    cfg: &OptimizationConfig,
) -> Result<Optimized, QualityError> {
    assessor.validate()?;
    cfg.validate()?;
    let budget = if prompt.is_enabled(Toggle::Do) { cfg.max_iterations } else { 1 };
    let mut trace: Vec<Iteration> = Vec::new();
    let mut prompts: Vec<PromptDocument> = Vec::new();
    let mut current = prompt;
    for index in 0..budget {
        let text = current.render();
        let response = match provider.complete(&text) {
            Ok(r) => r,
            Err(source) => return Err(QualityError::Provider { trace, source }),
        };
        let report = assessor.assess(&response, &current);
        log::debug!("iteration {index}: total {:.4} pass {}", report.total, report.pass);
        let pass = report.pass;
        trace.push(Iteration {
            index,
            prompt: text,
            response,
            report,
            adjustments: Vec::new(),
        });
        prompts.push(current.clone());
        if pass || index + 1 == budget {
            break;
        }
        let adjusted = adjust_prompt(&current, &trace[index].report, cfg);
        trace[index].adjustments = adjusted.applied;
        current = adjusted.prompt;
    }
    let selected = (0..trace.len())
        .reduce(|best, i| if trace[i].report.total > trace[best].report.total { i } else { best })
        .expect("at least one iteration");
    let chosen = &trace[selected];
    Ok(Optimized {
        response: chosen.response.clone(),
        report: chosen.report.clone(),
        prompt: prompts.swap_remove(selected),
        selected,
        trace,
    })
}
