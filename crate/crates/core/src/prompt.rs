//! Task template matching and three-stage prompt assembly.
//!
//! A query is projected onto each feature dimension's vocabulary (bag of
//! stems), compared with every template's dimension vectors, and the best
//! template by
//!
//! `S(Q, T_i) = Σ_j w_j · cos(Q_j, T_ij) · ln(N / df_j) · (1 + α_j · SpecTerms(j))`
//!
//! supplies the task definition and reasoning path of the prompt.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freshness::{KnowledgeEntry, Provenance};
use crate::graph::{ConceptId, LegalConcept};
use crate::relevance::RelevanceBreakdown;
use crate::retrieval::Query;
use crate::text::{contains_run, stem, stem_all, tokenize};

const WEIGHT_EPS: f64 = 1e-9;

pub const TASK_DEFINITION: &str = "## TASK DEFINITION";
pub const KNOWLEDGE_BACKGROUND: &str = "## KNOWLEDGE BACKGROUND";
pub const REASONING_GUIDANCE: &str = "## REASONING GUIDANCE";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template list is empty")]
    EmptyTemplates,
    #[error("template {template}: dimension {dimension} has {found} components, expected {expected}")]
    DimensionMismatch {
        template: String,
        dimension: String,
        expected: usize,
        found: usize,
    },
    #[error("query features cover {found} dimensions, expected {expected}")]
    FeatureCount { expected: usize, found: usize },
    #[error("invalid template set: {0}")]
    Invalid(String),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDimension {
    pub name: String,
    pub weight: f64,
    /// Number of documents in which this dimension is expressed.
    pub df: u64,
    #[serde(default)]
    pub alpha: f64,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningPath {
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplate {
    pub id: String,
    pub role_preamble: String,
    /// One vector per feature dimension, aligned with its vocabulary.
    pub dimension_vectors: Vec<Vec<f64>>,
    pub reasoning_path: ReasoningPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    /// Corpus size used in the IDF factor; the graph size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document_count: Option<u64>,
    pub generic_template: String,
    /// Best scores at or below this route to the generic template.
    #[serde(default)]
    pub score_floor: f64,
    pub dimensions: Vec<FeatureDimension>,
    pub templates: Vec<TaskTemplate>,
}

impl TemplateSet {
    pub fn from_json(json: &str, origin: &str) -> Result<Self, PromptError> {
        let set: TemplateSet = serde_json::from_str(json).map_err(|e| PromptError::Parse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        set.validate()?;
        Ok(set)
    }

    pub fn from_path(path: &Path) -> Result<Self, PromptError> {
        let json = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: String| Err(PromptError::Invalid(m));
        if self.templates.is_empty() {
            return Err(PromptError::EmptyTemplates);
        }
        if self.dimensions.is_empty() {
            return bad("no feature dimensions".into());
        }
        let mut sum = 0.0;
        for d in &self.dimensions {
            if !(d.weight >= 0.0 && d.weight.is_finite()) {
                return bad(format!("dimension {}: weight {} must be >= 0", d.name, d.weight));
            }
            if !(d.alpha >= 0.0 && d.alpha.is_finite()) {
                return bad(format!("dimension {}: alpha {} must be >= 0", d.name, d.alpha));
            }
            if d.df == 0 {
                return bad(format!("dimension {}: df must be at least 1", d.name));
            }
            if d.vocabulary.is_empty() {
                return bad(format!("dimension {}: empty vocabulary", d.name));
            }
            sum += d.weight;
        }
        if (sum - 1.0).abs() > WEIGHT_EPS {
            return bad(format!("dimension weights sum to {sum}, expected 1"));
        }
        let mut ids = HashSet::new();
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return bad(format!("duplicate template id {}", t.id));
            }
            if t.dimension_vectors.len() != self.dimensions.len() {
                return bad(format!(
                    "template {}: {} dimension vectors for {} dimensions",
                    t.id,
                    t.dimension_vectors.len(),
                    self.dimensions.len()
                ));
            }
            for (v, d) in t.dimension_vectors.iter().zip(&self.dimensions) {
                if v.len() != d.vocabulary.len() {
                    return Err(PromptError::DimensionMismatch {
                        template: t.id.clone(),
                        dimension: d.name.clone(),
                        expected: d.vocabulary.len(),
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return bad(format!("template {}: non-finite component", t.id));
                }
            }
            let steps = &t.reasoning_path.steps;
            if steps.len() < 2 {
                return bad(format!("template {}: reasoning path needs at least 2 steps", t.id));
            }
            if steps.iter().collect::<HashSet<_>>().len() != steps.len() {
                return bad(format!("template {}: duplicate reasoning step", t.id));
            }
        }
        if !ids.contains(self.generic_template.as_str()) {
            return bad(format!("generic template {} is not defined", self.generic_template));
        }
        if let Some(n) = self.document_count {
            self.check_document_count(n)?;
        }
        Ok(())
    }

    fn check_document_count(&self, n: u64) -> Result<(), PromptError> {
        match self.dimensions.iter().find(|d| d.df > n) {
            Some(d) => Err(PromptError::Invalid(format!(
                "dimension {}: df {} exceeds document count {n}",
                d.name, d.df
            ))),
            None => Ok(()),
        }
    }

    pub fn template(&self, id: &str) -> Option<&TaskTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// `document_count` if set, otherwise `graph_size`.
    pub fn resolve_document_count(&self, graph_size: usize) -> Result<u64, PromptError> {
        let n = self.document_count.unwrap_or(graph_size as u64);
        self.check_document_count(n)?;
        Ok(n)
    }
}

/// Query features of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFeatures {
    pub vector: Vec<f64>,
    pub spec_terms: u32,
}

/// Projects the query onto each dimension vocabulary.
///
/// Component `k` of `Q_j` counts occurrences of vocabulary entry `k` among
/// the query stems (a multi-word entry counts once if its stems appear
/// contiguously). `SpecTerms(j)` counts query tokens that belong to the
/// dimension's vocabulary and to `lexicon`.
pub fn extract_features(q: &Query, dims: &[FeatureDimension], lexicon: &HashSet<String>) -> Vec<DimensionFeatures> {
    let stems = q.stems();
    dims.iter()
        .map(|d| {
            let entries: Vec<Vec<String>> = d.vocabulary.iter().map(|v| stem_all(&tokenize(v))).collect();
            let vector = entries
                .iter()
                .map(|e| match e.as_slice() {
                    [] => 0.0,
                    [one] => stems.iter().filter(|s| *s == one).count() as f64,
                    run => f64::from(u8::from(contains_run(stems, run))),
                })
                .collect();
            let vocab: HashSet<&String> = entries.iter().flatten().collect();
            let spec_terms = q
                .tokens()
                .iter()
                .filter(|t| lexicon.contains(*t) && vocab.contains(&stem(t)))
                .count() as u32;
            DimensionFeatures { vector, spec_terms }
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Score of template `t` for the given query features.
pub fn task_match_score(
    features: &[DimensionFeatures],
    t: &TaskTemplate,
    dims: &[FeatureDimension],
    document_count: u64,
) -> Result<f64, PromptError> {
    if features.len() != dims.len() {
        return Err(PromptError::FeatureCount {
            expected: dims.len(),
            found: features.len(),
        });
    }
    if t.dimension_vectors.len() != dims.len() {
        return Err(PromptError::FeatureCount {
            expected: dims.len(),
            found: t.dimension_vectors.len(),
        });
    }
    let mut score = 0.0;
    for ((f, tv), d) in features.iter().zip(&t.dimension_vectors).zip(dims) {
        if f.vector.len() != tv.len() {
            return Err(PromptError::DimensionMismatch {
                template: t.id.clone(),
                dimension: d.name.clone(),
                expected: f.vector.len(),
                found: tv.len(),
            });
        }
        if d.df == 0 || d.df > document_count {
            return Err(PromptError::Invalid(format!(
                "dimension {}: df {} outside [1, {document_count}]",
                d.name, d.df
            )));
        }
        let idf = (document_count as f64 / d.df as f64).ln();
        score += d.weight * cosine(&f.vector, tv) * idf * (1.0 + d.alpha * f64::from(f.spec_terms));
    }
    Ok(score)
}

/// Index of the highest score; ties go to the smaller id.
pub fn pick_best(scored: &[(&str, f64)]) -> Option<usize> {
    (0..scored.len()).reduce(|best, i| {
        let (id, s) = scored[i];
        let (bid, bs) = scored[best];
        if s > bs || (s == bs && id < bid) {
            i
        } else {
            best
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateChoice {
    pub template_id: String,
    pub score: f64,
    /// The best match did not clear the floor and the generic template was
    /// used instead.
    pub generic: bool,
}

/// Best template by [`task_match_score`], or the generic template when the
/// best score does not exceed the set's floor.
pub fn select_task_template(
    features: &[DimensionFeatures],
    set: &TemplateSet,
    document_count: u64,
) -> Result<TemplateChoice, PromptError> {
    if set.templates.is_empty() {
        return Err(PromptError::EmptyTemplates);
    }
    let scores = set
        .templates
        .iter()
        .map(|t| Ok((t.id.as_str(), task_match_score(features, t, &set.dimensions, document_count)?)))
        .collect::<Result<Vec<_>, PromptError>>()?;
    let (id, score) = scores[pick_best(&scores).expect("non-empty")];
    if score <= set.score_floor {
        return Ok(TemplateChoice {
            template_id: set.generic_template.clone(),
            score,
            generic: true,
        });
    }
    Ok(TemplateChoice {
        template_id: id.to_string(),
        score,
        generic: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Traditional,
    Complete,
}

impl Mode {
    /// Whether the component can be active in this mode at all.
    pub fn allows(self, t: Toggle) -> bool {
        match self {
            Mode::Baseline => false,
            Mode::Traditional => matches!(t, Toggle::Kb | Toggle::Lcm | Toggle::Svm),
            Mode::Complete => true,
        }
    }

    /// Components active in this mode when none are disabled.
    pub fn effective(self, disabled: &BTreeSet<Toggle>) -> BTreeSet<Toggle> {
        Toggle::ALL
            .into_iter()
            .filter(|t| self.allows(*t) && !disabled.contains(t))
            .collect()
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "traditional" => Ok(Mode::Traditional),
            "complete" => Ok(Mode::Complete),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Traditional => "traditional",
            Mode::Complete => "complete",
        })
    }
}

/// Switchable pipeline components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Toggle {
    /// Task definition section.
    #[serde(rename = "TD")]
    Td,
    /// Knowledge background section.
    #[serde(rename = "KB")]
    Kb,
    /// Reasoning guidance section.
    #[serde(rename = "RG")]
    Rg,
    /// Dynamic optimization loop.
    #[serde(rename = "DO")]
    Do,
    /// Legal code matching strategy.
    #[serde(rename = "LCM")]
    Lcm,
    /// Semantic vector strategy.
    #[serde(rename = "SVM")]
    Svm,
}

impl Toggle {
    pub const ALL: [Toggle; 6] = [Toggle::Td, Toggle::Kb, Toggle::Rg, Toggle::Do, Toggle::Lcm, Toggle::Svm];

    pub fn as_str(self) -> &'static str {
        match self {
            Toggle::Td => "TD",
            Toggle::Kb => "KB",
            Toggle::Rg => "RG",
            Toggle::Do => "DO",
            Toggle::Lcm => "LCM",
            Toggle::Svm => "SVM",
        }
    }
}

impl FromStr for Toggle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Toggle::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown component {s:?} (expected one of TD, KB, RG, DO, LCM, SVM)"))
    }
}

impl fmt::Display for Toggle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One knowledge item shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<ConceptId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub snippet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<RelevanceBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authority: Option<f64>,
}

fn snippet(code: Option<&str>, fallback: &str, title: &str, text: &str) -> String {
    let label = match code {
        Some(c) => format!("[{c}]"),
        None => format!("({fallback})"),
    };
    let body = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match (title.is_empty(), body.is_empty()) {
        (false, false) => format!("{label} {title}: {body}"),
        (false, true) => format!("{label} {title}"),
        (true, _) => format!("{label} {body}"),
    }
}

impl BackgroundEntry {
    pub fn from_concept(c: &LegalConcept, relevance: Option<RelevanceBreakdown>) -> Self {
        BackgroundEntry {
            concept: Some(c.id.clone()),
            code: c.code.clone(),
            snippet: snippet(c.code.as_deref(), c.id.as_str(), &c.title, &c.text),
            relevance,
            authority: None,
        }
    }

    /// Graph entries look up their relevance through `relevance_of`.
    pub fn from_knowledge<F>(e: &KnowledgeEntry, relevance_of: F) -> Self
    where
        F: Fn(&ConceptId) -> Option<RelevanceBreakdown>,
    {
        let (concept, relevance, authority, fallback) = match &e.provenance {
            Provenance::Graph { concept, .. } => {
                (Some(concept.clone()), relevance_of(concept), None, concept.to_string())
            }
            Provenance::Search { authority } => (None, None, Some(*authority), "search".to_string()),
        };
        BackgroundEntry {
            concept,
            code: e.code.clone(),
            snippet: snippet(e.code.as_deref(), &fallback, &e.title, &e.text),
            relevance,
            authority,
        }
    }
}

/// Extra instructions added to the reasoning guidance by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceBlock {
    CitationFormat,
    StepEnumeration,
}

/// Prompt edits made by the optimization loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    ExpandBackground,
    CitationFormat,
    StepEnumeration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub query: String,
    pub mode: Mode,
    /// Components in effect after applying the mode.
    pub toggles: BTreeSet<Toggle>,
    pub template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_definition: Option<String>,
    pub knowledge_background: Vec<BackgroundEntry>,
    /// Ranked entries held back for background expansion.
    #[serde(skip)]
    pub reserve: Vec<BackgroundEntry>,
    pub reasoning_steps: Vec<String>,
    pub guidance_blocks: Vec<GuidanceBlock>,
    pub adjustments: Vec<Adjustment>,
}

/// Builds the prompt for `query` from template `t` and a background already
/// in rank order. Sections the mode or toggles exclude are left empty.
pub fn assemble_prompt(
    query: &str,
    t: &TaskTemplate,
    background: Vec<BackgroundEntry>,
    reserve: Vec<BackgroundEntry>,
    mode: Mode,
    disabled: &BTreeSet<Toggle>,
) -> PromptDocument {
    let toggles = mode.effective(disabled);
    let kb = toggles.contains(&Toggle::Kb);
    PromptDocument {
        query: query.to_string(),
        mode,
        task_definition: toggles.contains(&Toggle::Td).then(|| t.role_preamble.clone()),
        knowledge_background: if kb { background } else { Vec::new() },
        reserve: if kb { reserve } else { Vec::new() },
        reasoning_steps: if toggles.contains(&Toggle::Rg) {
            t.reasoning_path.steps.clone()
        } else {
            Vec::new()
        },
        guidance_blocks: Vec::new(),
        adjustments: Vec::new(),
        template_id: t.id.clone(),
        toggles,
    }
}

impl PromptDocument {
    pub fn is_enabled(&self, t: Toggle) -> bool {
        self.toggles.contains(&t)
    }

    /// Codes of the background entries, in order.
    pub fn background_codes(&self) -> Vec<&str> {
        self.knowledge_background.iter().filter_map(|e| e.code.as_deref()).collect()
    }

    fn block_text(&self, b: GuidanceBlock) -> String {
        match b {
            GuidanceBlock::CitationFormat => {
                let example = self.background_codes().first().copied().unwrap_or("CODE-1");
                format!(
                    "Citation format: cite every legal source you rely on as [CODE], using only codes \
                     listed in the knowledge background, for example [{example}]. Cite each background \
                     source that bears on the answer."
                )
            }
            GuidanceBlock::StepEnumeration => {
                let steps = if self.reasoning_steps.is_empty() {
                    "issue, rule, application, conclusion".to_string()
                } else {
                    self.reasoning_steps.join(", ")
                };
                format!(
                    "Step enumeration: answer in separate paragraphs, one per reasoning step, in this \
                     order: {steps}. Each paragraph builds on the previous one."
                )
            }
        }
    }

    /// The prompt text sent to the model. Each active section starts with
    /// its marker line; the raw query closes the prompt. With no active
    /// section the prompt is exactly the query.
    pub fn render(&self) -> String {
        let mut sections = Vec::new();
        if let Some(td) = &self.task_definition {
            sections.push(format!("{TASK_DEFINITION}\n{td}"));
        }
        if self.is_enabled(Toggle::Kb) {
            let mut s = String::from(KNOWLEDGE_BACKGROUND);
            if self.knowledge_background.is_empty() {
                s.push_str("\n(no matching legal knowledge)");
            }
            for (i, e) in self.knowledge_background.iter().enumerate() {
                s.push_str(&format!("\n{}. {}", i + 1, e.snippet));
            }
            sections.push(s);
        }
        if !self.reasoning_steps.is_empty() || !self.guidance_blocks.is_empty() {
            let mut s = String::from(REASONING_GUIDANCE);
            for (i, step) in self.reasoning_steps.iter().enumerate() {
                s.push_str(&format!("\n{}. {step}", i + 1));
            }
            for b in &self.guidance_blocks {
                s.push('\n');
                s.push_str(&self.block_text(*b));
            }
            sections.push(s);
        }
        if sections.is_empty() {
            return self.query.clone();
        }
        sections.push(self.query.clone());
        sections.join("\n\n")
    }
}
