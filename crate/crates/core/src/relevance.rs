//! Multi-dimensional concept relevance used to build the knowledge
//! background of a prompt.
//!
//! `R(C,Q) = w_text·R_text + w_kg·R_kg + w_case·R_case + w_jur·R_jur`
//!
//! * `R_text` is BM25+ with the `δ` compensation added per matched term,
//!   min-max normalized over the candidate set (a set whose raw scores are
//!   all equal normalizes to 1).
//! * `R_kg = λ_kg^d` with `d` the hop distance to the nearest query concept.
//! * `R_case` is the citation count divided by the graph maximum.
//! * `R_jur` is the Jaccard overlap of jurisdiction sets; two empty sets
//!   mean "unrestricted" and score 1.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ConceptId, GraphError, KnowledgeGraph, LegalConcept};
use crate::par::{self, Parallelism};
use crate::retrieval::{check_simplex, Query, QueryPaths};
use crate::text::jaccard;

#[derive(Debug, Error)]
pub enum RelevanceError {
    #[error("invalid relevance parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub delta: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            delta: 1.0,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), RelevanceError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(RelevanceError::InvalidParams(format!("k1 {} must be positive", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RelevanceError::InvalidParams(format!("b {} outside [0, 1]", self.b)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(RelevanceError::InvalidParams(format!("delta {} must be >= 0", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceWeights {
    pub text: f64,
    pub kg: f64,
    pub case: f64,
    pub jur: f64,
}

impl Default for RelevanceWeights {
    fn default() -> Self {
        RelevanceWeights {
            text: 0.4,
            kg: 0.3,
            case: 0.15,
            jur: 0.15,
        }
    }
}

impl RelevanceWeights {
    pub fn validate(&self) -> Result<(), RelevanceError> {
        check_simplex(&[self.text, self.kg, self.case, self.jur], "relevance weights")
            .map_err(|e| RelevanceError::InvalidParams(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceParams {
    pub bm25: Bm25Params,
    pub weights: RelevanceWeights,
    /// Decay per hop of the graph component, in `(0, 1)`.
    pub lambda_kg: f64,
}

impl Default for RelevanceParams {
    fn default() -> Self {
        RelevanceParams {
            bm25: Bm25Params::default(),
            weights: RelevanceWeights::default(),
            lambda_kg: 0.5,
        }
    }
}

impl RelevanceParams {
    pub fn validate(&self) -> Result<(), RelevanceError> {
        self.bm25.validate()?;
        self.weights.validate()?;
        if !(self.lambda_kg > 0.0 && self.lambda_kg < 1.0) {
            return Err(RelevanceError::InvalidParams(format!(
                "lambda_kg {} outside (0, 1)",
                self.lambda_kg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceBreakdown {
    pub r_text_raw: f64,
    pub r_text: f64,
    pub r_kg: f64,
    pub r_case: f64,
    pub r_jur: f64,
    pub total: f64,
}

/// `ln((N − df + 0.5) / (df + 0.5) + 1)`; never negative.
pub fn idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// Contribution of one matched term:
/// `IDF · (f·(k1+1) / (f + k1·(1 − b + b·|C|/avgdl)) + δ)`.
pub fn bm25_plus_term(idf: f64, tf: f64, doc_len: f64, avgdl: f64, p: &Bm25Params) -> f64 {
    let norm = if avgdl > 0.0 {
        1.0 - p.b + p.b * doc_len / avgdl
    } else {
        1.0
    };
    idf * (tf * (p.k1 + 1.0) / (tf + p.k1 * norm) + p.delta)
}

/// BM25+ score of concept `c` for the distinct query tokens it contains.
pub fn bm25_plus(q: &Query, c: &LegalConcept, g: &KnowledgeGraph, p: &Bm25Params) -> Result<f64, GraphError> {
    let stats = g.doc_stats(g.index_of(&c.id)?);
    let mut seen = HashSet::new();
    let mut score = 0.0;
    for t in q.tokens() {
        if !seen.insert(t.as_str()) {
            continue;
        }
        if let Some(&tf) = stats.term_freq.get(t) {
            let idf = idf(g.doc_count(), g.doc_freq(t));
            score += bm25_plus_term(idf, f64::from(tf), stats.len as f64, g.avgdl(), p);
        }
    }
    Ok(score)
}

pub fn kg_relevance(g: &KnowledgeGraph, c: &ConceptId, q: &Query, lambda_kg: f64) -> Result<f64, GraphError> {
    let index = g.index_of(c)?;
    Ok(kg_from_paths(&QueryPaths::new(g, q)?, index, lambda_kg))
}

fn kg_from_paths(paths: &QueryPaths, index: usize, lambda_kg: f64) -> f64 {
    paths
        .min_hops(index)
        .map_or(0.0, |d| lambda_kg.powi(d as i32))
}

pub fn case_relevance(c: &LegalConcept, g: &KnowledgeGraph) -> f64 {
    let max = g.max_citations();
    if max <= 0 {
        return 0.0;
    }
    (c.citation_count.max(0) as f64 / max as f64).clamp(0.0, 1.0)
}

pub fn jur_relevance(c: &LegalConcept, q: &Query) -> f64 {
    let a: HashSet<&String> = c.jurisdictions.iter().collect();
    let b: HashSet<&String> = q.jurisdictions.iter().collect();
    jaccard(&a, &b)
}

/// Min-max normalization of raw text scores over a candidate set.
pub fn normalize_text_scores(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&x| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 })
        .collect()
}

/// Weighted sum of the four normalized components, kept within their
/// `[min, max]`.
pub fn combine(r_text: f64, r_kg: f64, r_case: f64, r_jur: f64, w: &RelevanceWeights) -> Result<f64, RelevanceError> {
    w.validate()?;
    let xs = [r_text, r_kg, r_case, r_jur];
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((w.text * r_text + w.kg * r_kg + w.case * r_case + w.jur * r_jur).clamp(lo, hi))
}

/// Relevance breakdown of every candidate; `R_text` is normalized over
/// `candidates`. Output follows input order.
pub fn concept_relevance(
    g: &KnowledgeGraph,
    q: &Query,
    candidates: &[ConceptId],
    p: &RelevanceParams,
    mode: Parallelism,
) -> Result<Vec<(ConceptId, RelevanceBreakdown)>, RelevanceError> {
    p.validate()?;
    let paths = QueryPaths::new(g, q)?;
    let partial = par::try_map(candidates, mode, |id| -> Result<_, RelevanceError> {
        let index = g.index_of(id)?;
        let c = g.concept_at(index);
        Ok((
            bm25_plus(q, c, g, &p.bm25)?,
            kg_from_paths(&paths, index, p.lambda_kg),
            case_relevance(c, g),
            jur_relevance(c, q),
        ))
    })?;
    let raw: Vec<f64> = partial.iter().map(|x| x.0).collect();
    let norm = normalize_text_scores(&raw);
    candidates
        .iter()
        .zip(partial)
        .zip(norm)
        .map(|((id, (r_text_raw, r_kg, r_case, r_jur)), r_text)| {
            let total = combine(r_text, r_kg, r_case, r_jur, &p.weights)?;
            Ok((
                id.clone(),
                RelevanceBreakdown {
                    r_text_raw,
                    r_text,
                    r_kg,
                    r_case,
                    r_jur,
                    total,
                },
            ))
        })
        .collect()
}

/// Orders scored candidates by descending total, ties by concept id, and
/// keeps the first `m`.
pub fn rank_scored(mut scored: Vec<(ConceptId, RelevanceBreakdown)>, m: usize) -> Vec<(ConceptId, RelevanceBreakdown)> {
    scored.sort_by(|a, b| b.1.total.total_cmp(&a.1.total).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(m);
    scored
}

/// Scores `candidates` and returns the top `m` by relevance.
pub fn rank_background(
    g: &KnowledgeGraph,
    q: &Query,
    candidates: &[ConceptId],
    p: &RelevanceParams,
    m: usize,
) -> Result<Vec<(ConceptId, RelevanceBreakdown)>, RelevanceError> {
    if m == 0 {
        return Err(RelevanceError::InvalidParams("m must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    Ok(rank_scored(concept_relevance(g, q, candidates, p, Parallelism::default())?, m))
}
