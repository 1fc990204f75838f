//! Multi-strategy concept retrieval.
//!
//! Every concept gets four independent scores in `[0, 1]`:
//!
//! * **CM**, code match: `γ·Exact + (1−γ)·Partial` over normalized legal
//!   codes, where `Partial` is the share of leading code segments the two
//!   codes have in common, relative to the longer code.
//! * **VS**, vector similarity: cosine of concept and query embeddings,
//!   floored at 0.
//! * **PI**, path inference: `max_q λ^d(C,q) · Σ weight(r)` over the
//!   hop-minimal path to each concept named in the query. A concept named
//!   in the query scores 1.
//! * **TM**, term match: `Σ w_t·Match(t,Q)·ILT_norm(t) / Σ w_t` where
//!   `Match = α1·Exact + α2·Stem + α3·SemSim` and `ILT_norm` is the legal
//!   term weight divided by `ilt_cap`, clipped to `[0, 1]`.
//!
//! The scores are fused by a convex combination and the top `k` concepts
//! are picked greedily by maximal marginal relevance.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{normalize_code, segments};
use crate::graph::{ConceptId, GraphError, KnowledgeGraph, LegalConcept, PathSummary};
use crate::par::{self, Parallelism};
use crate::provider::ProviderError;
use crate::text::{contains_run, jaccard, stem_all, term_key, tokenize};

const WEIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid match parameters: {0}")]
    InvalidParams(String),
    #[error("vector dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine of a zero or empty vector is undefined")]
    ZeroVector,
    #[error("cannot retrieve from an empty graph")]
    EmptyGraph,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("term statistics line {line}: {message}")]
    TermStats { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    CodeMatch,
    VectorSimilarity,
    PathInference,
    TermMatch,
}

/// Fusion weights of the four strategies; non-negative, summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub cm: f64,
    pub vs: f64,
    pub pi: f64,
    pub tm: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            cm: 0.25,
            vs: 0.25,
            pi: 0.25,
            tm: 0.25,
        }
    }
}

impl FusionWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.cm, self.vs, self.pi, self.tm]
    }

    pub fn from_array([cm, vs, pi, tm]: [f64; 4]) -> Self {
        FusionWeights { cm, vs, pi, tm }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        check_simplex(&self.as_array(), "fusion weights")
    }

    /// Zeroes the weight of `strategy` and rescales the others so the sum
    /// stays 1.
    pub fn without(&self, strategy: Strategy) -> Result<Self, RetrievalError> {
        let mut w = self.as_array();
        let i = strategy as usize;
        let rest = 1.0 - w[i];
        if rest <= WEIGHT_EPS {
            return Err(RetrievalError::InvalidParams(format!(
                "disabling {strategy:?} leaves no fusion weight"
            )));
        }
        w[i] = 0.0;
        for x in &mut w {
            *x /= rest;
        }
        Ok(FusionWeights::from_array(w))
    }
}

/// Weights of exact, stem and semantic matching inside `Match(t, Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermMatchWeights {
    pub exact: f64,
    pub stem: f64,
    pub semantic: f64,
}

impl Default for TermMatchWeights {
    fn default() -> Self {
        TermMatchWeights {
            exact: 0.5,
            stem: 0.3,
            semantic: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    /// Exact-vs-partial balance of code matching, in `[0, 1]`.
    pub gamma: f64,
    /// Path-length decay, in `(0, 1)`.
    pub lambda_decay: f64,
    pub term_match: TermMatchWeights,
    pub fusion: FusionWeights,
    /// Legal-term weight at which `ILT_norm` saturates.
    pub ilt_cap: f64,
    /// Relevance/diversity trade-off of the final selection; 1 disables
    /// diversity control.
    pub diversity_lambda: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            gamma: 0.7,
            lambda_decay: 0.8,
            term_match: TermMatchWeights::default(),
            fusion: FusionWeights::default(),
            ilt_cap: 1000f64.ln(),
            diversity_lambda: 0.7,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: String| Err(RetrievalError::InvalidParams(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lambda_decay > 0.0 && self.lambda_decay < 1.0) {
            return bad(format!("lambda_decay {} outside (0, 1)", self.lambda_decay));
        }
        if !(self.ilt_cap > 0.0 && self.ilt_cap.is_finite()) {
            return bad(format!("ilt_cap {} must be positive", self.ilt_cap));
        }
        if !(0.0..=1.0).contains(&self.diversity_lambda) {
            return bad(format!("diversity_lambda {} outside [0, 1]", self.diversity_lambda));
        }
        let a = self.term_match;
        check_simplex(&[a.exact, a.stem, a.semantic], "term match weights")?;
        self.fusion.validate()
    }
}

pub(crate) fn check_simplex(w: &[f64], what: &str) -> Result<(), RetrievalError> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(RetrievalError::InvalidParams(format!("{what} must be non-negative: {w:?}")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_EPS {
        return Err(RetrievalError::InvalidParams(format!("{what} sum to {sum}, expected 1")));
    }
    Ok(())
}

/// A user query after analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    text: String,
    tokens: Vec<String>,
    stems: Vec<String>,
    pub code: Option<String>,
    pub concept_ids: BTreeSet<ConceptId>,
    pub embedding: Option<Vec<f64>>,
    pub jurisdictions: BTreeSet<String>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        let stems = stem_all(&tokens);
        Query {
            text,
            tokens,
            stems,
            code: None,
            concept_ids: BTreeSet::new(),
            embedding: None,
            jurisdictions: BTreeSet::new(),
        }
    }

    pub fn with_code(mut self, raw: &str) -> Self {
        let code = normalize_code(raw);
        self.code = (!code.is_empty()).then_some(code);
        self
    }

    pub fn with_concepts<I: IntoIterator<Item = ConceptId>>(mut self, ids: I) -> Self {
        self.concept_ids.extend(ids);
        self
    }

    pub fn with_embedding(mut self, v: Vec<f64>) -> Self {
        self.embedding = Some(v);
        self
    }

    pub fn with_jurisdictions<I: IntoIterator<Item = S>, S: Into<String>>(mut self, j: I) -> Self {
        self.jurisdictions.extend(j.into_iter().map(Into::into));
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermStat {
    pub freq_legal: u64,
    pub freq_general: u64,
    pub jur_scope: f64,
}

/// Legal vs general corpus frequencies per term, loaded from `.terms.tsv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermStats {
    terms: HashMap<String, TermStat>,
    sigma: f64,
}

impl TermStats {
    pub fn new(sigma: f64) -> Result<Self, RetrievalError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(RetrievalError::InvalidParams(format!("sigma {sigma} must be positive")));
        }
        Ok(TermStats {
            terms: HashMap::new(),
            sigma,
        })
    }

    pub fn insert(&mut self, term: &str, stat: TermStat) -> Result<(), RetrievalError> {
        if !(0.0..=1.0).contains(&stat.jur_scope) {
            return Err(RetrievalError::InvalidParams(format!(
                "jur_scope {} of \"{term}\" outside [0, 1]",
                stat.jur_scope
            )));
        }
        self.terms.insert(term_key(term), stat);
        Ok(())
    }

    /// Parses tab-separated `term, freq_legal, freq_general, jur_scope`
    /// rows. A first row starting with `term` is treated as a header, even
    /// after comments; blank lines and `#` comments are skipped.
    pub fn from_tsv<R: BufRead>(reader: R, sigma: f64) -> Result<Self, RetrievalError> {
        let mut stats = TermStats::new(sigma)?;
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if std::mem::take(&mut first) && cols[0].eq_ignore_ascii_case("term") {
                continue;
            }
            let err = |message: String| RetrievalError::TermStats {
                line: lineno,
                message,
            };
            if cols.len() != 4 {
                return Err(err(format!("expected 4 tab-separated columns, found {}", cols.len())));
            }
            let parse_count = |s: &str, name: &str| {
                s.parse::<u64>().map_err(|e| err(format!("{name} {s:?}: {e}")))
            };
            let stat = TermStat {
                freq_legal: parse_count(cols[1], "freq_legal")?,
                freq_general: parse_count(cols[2], "freq_general")?,
                jur_scope: cols[3]
                    .parse::<f64>()
                    .map_err(|e| err(format!("jur_scope {:?}: {e}", cols[3])))?,
            };
            if term_key(cols[0]).is_empty() {
                return Err(err("empty term".into()));
            }
            stats.insert(cols[0], stat).map_err(|e| err(e.to_string()))?;
        }
        Ok(stats)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<&TermStat> {
        self.terms.get(&term_key(term))
    }

    /// Tokens of every term whose legal weight is positive.
    pub fn lexicon_tokens(&self) -> HashSet<String> {
        self.terms
            .iter()
            .filter(|(t, _)| ilt_weight(t, self) > 0.0)
            .flat_map(|(t, _)| t.split(' ').map(str::to_string))
            .collect()
    }
}

/// Legal professional weight of a term: the log ratio of smoothed legal to
/// general corpus frequency, scaled by jurisdictional scope, clamped below
/// at 0. Unknown terms count as zero frequency in both corpora.
pub fn ilt_weight(term: &str, stats: &TermStats) -> f64 {
    let s = stats.sigma;
    let (legal, general, scope) = match stats.get(term) {
        Some(st) => (st.freq_legal as f64, st.freq_general as f64, st.jur_scope),
        None => (0.0, 0.0, 0.0),
    };
    (((legal + s) / (general + s)).ln()).max(0.0) * scope
}

/// Semantic similarity between a term and a query, in `[0, 1]`.
pub trait TermSimilarity: Send + Sync {
    fn similarity(&self, term: &str, query: &Query) -> Result<f64, ProviderError>;
}

/// Always 0; used when no term embeddings are available.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSemantics;

impl TermSimilarity for NoSemantics {
    fn similarity(&self, _: &str, _: &Query) -> Result<f64, ProviderError> {
        Ok(0.0)
    }
}

/// Cosine between a term embedding and the query embedding, floored at 0.
/// Terms without an embedding, or queries without one, score 0.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTermSimilarity {
    embeddings: HashMap<String, Vec<f64>>,
}

impl EmbeddingTermSimilarity {
    pub fn new<I: IntoIterator<Item = (String, Vec<f64>)>>(embeddings: I) -> Self {
        EmbeddingTermSimilarity {
            embeddings: embeddings
                .into_iter()
                .map(|(t, v)| (term_key(&t), v))
                .collect(),
        }
    }
}

impl TermSimilarity for EmbeddingTermSimilarity {
    fn similarity(&self, term: &str, query: &Query) -> Result<f64, ProviderError> {
        let (Some(t), Some(q)) = (self.embeddings.get(&term_key(term)), &query.embedding) else {
            return Ok(0.0);
        };
        match vector_similarity(t, q) {
            Ok(c) => Ok(c.clamp(0.0, 1.0)),
            Err(RetrievalError::ZeroVector) => Ok(0.0),
            Err(e) => Err(ProviderError::new(e.to_string())),
        }
    }
}

/// `γ·ExactMatch + (1−γ)·PartialMatch` on normalized codes.
pub fn code_match(concept_code: &str, query_code: &str, gamma: f64) -> f64 {
    if concept_code.is_empty() || query_code.is_empty() {
        return 0.0;
    }
    let exact = if concept_code == query_code { 1.0 } else { 0.0 };
    let a = segments(concept_code);
    let b = segments(query_code);
    let shared = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let partial = shared as f64 / a.len().max(b.len()) as f64;
    gamma * exact + (1.0 - gamma) * partial
}

/// Cosine of the angle between `a` and `b`, in `[-1, 1]`.
pub fn vector_similarity(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if a.is_empty() || na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Hop distances and path weights from each query concept, computed once
/// per query and shared by path inference and graph relevance.
#[derive(Debug, Clone)]
pub struct QueryPaths {
    members: HashSet<usize>,
    profiles: Vec<Vec<Option<PathSummary>>>,
}

impl QueryPaths {
    pub fn new(g: &KnowledgeGraph, q: &Query) -> Result<Self, GraphError> {
        let mut members = HashSet::new();
        let mut profiles = Vec::new();
        for id in &q.concept_ids {
            members.insert(g.index_of(id)?);
            profiles.push(g.path_profile(id)?);
        }
        Ok(QueryPaths { members, profiles })
    }

    /// PI score of the concept at `index`.
    pub fn path_inference(&self, index: usize, lambda: f64) -> f64 {
        if self.members.contains(&index) {
            return 1.0;
        }
        self.profiles
            .iter()
            .filter_map(|p| p[index])
            .map(|s| lambda.powi(s.hops as i32) * s.weight_sum)
            .fold(0.0, f64::max)
            .clamp(0.0, 1.0)
    }

    /// Smallest hop distance from the concept at `index` to any query
    /// concept.
    pub fn min_hops(&self, index: usize) -> Option<usize> {
        if self.members.contains(&index) {
            return Some(0);
        }
        self.profiles.iter().filter_map(|p| p[index]).map(|s| s.hops).min()
    }
}

pub fn path_inference(
    g: &KnowledgeGraph,
    concept: &ConceptId,
    q: &Query,
    p: &MatchParams,
) -> Result<f64, RetrievalError> {
    let index = g.index_of(concept)?;
    Ok(QueryPaths::new(g, q)?.path_inference(index, p.lambda_decay))
}

/// `α1·Exact + α2·Stem + α3·SemSim` for one (possibly multi-word) term.
pub fn match_term(
    term: &str,
    q: &Query,
    weights: &TermMatchWeights,
    sem: &dyn TermSimilarity,
) -> Result<f64, ProviderError> {
    let tokens = tokenize(term);
    let exact = contains_run(q.tokens(), &tokens);
    let stem = exact || contains_run(q.stems(), &stem_all(&tokens));
    let semantic = sem.similarity(term, q)?.clamp(0.0, 1.0);
    let score = weights.exact * f64::from(u8::from(exact))
        + weights.stem * f64::from(u8::from(stem))
        + weights.semantic * semantic;
    Ok(score.clamp(0.0, 1.0))
}

pub fn term_match_score(
    c: &LegalConcept,
    q: &Query,
    stats: &TermStats,
    p: &MatchParams,
    sem: &dyn TermSimilarity,
) -> Result<f64, ProviderError> {
    if c.terms.is_empty() {
        return Ok(0.0);
    }
    let total_weight: f64 = c.terms.iter().map(|t| t.weight).sum();
    if total_weight <= 0.0 {
        log::warn!("concept {} has only zero-weight terms; term match is 0", c.id);
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for t in &c.terms {
        if t.weight == 0.0 {
            continue;
        }
        let ilt = (ilt_weight(&t.term, stats) / p.ilt_cap).min(1.0);
        if ilt == 0.0 {
            continue;
        }
        acc += t.weight * match_term(&t.term, q, &p.term_match, sem)? * ilt;
    }
    Ok((acc / total_weight).clamp(0.0, 1.0))
}

/// Per-strategy scores of one concept and their fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyScores {
    pub cm: f64,
    pub vs: f64,
    pub pi: f64,
    pub tm: f64,
    pub fused: f64,
}

/// Convex combination of the four strategy scores. The result is kept
/// inside `[min, max]` of the inputs so rounding cannot push it out.
pub fn fuse_scores(
    cm: f64,
    vs: f64,
    pi: f64,
    tm: f64,
    w: &FusionWeights,
) -> Result<StrategyScores, RetrievalError> {
    w.validate()?;
    let xs = [cm, vs, pi, tm];
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fused = (w.cm * cm + w.vs * vs + w.pi * pi + w.tm * tm).clamp(lo, hi);
    Ok(StrategyScores { cm, vs, pi, tm, fused })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub concept: ConceptId,
    pub scores: StrategyScores,
    pub rank: usize,
}

/// Scores every concept of `g` against `q`, in graph order.
pub fn score_concepts(
    g: &KnowledgeGraph,
    q: &Query,
    stats: &TermStats,
    p: &MatchParams,
    sem: &dyn TermSimilarity,
    mode: Parallelism,
) -> Result<Vec<StrategyScores>, RetrievalError> {
    p.validate()?;
    if let (Some(qe), Some(d)) = (&q.embedding, g.embedding_dim()) {
        if qe.len() != d {
            return Err(RetrievalError::DimensionMismatch(qe.len(), d));
        }
    }
    let paths = QueryPaths::new(g, q)?;
    let indices: Vec<usize> = (0..g.len()).collect();
    par::try_map(&indices, mode, |&i| {
        let c = g.concept_at(i);
        let cm = match (&c.code, &q.code) {
            (Some(a), Some(b)) => code_match(a, b, p.gamma),
            _ => 0.0,
        };
        let vs = match (&c.embedding, &q.embedding) {
            (Some(a), Some(b)) => match vector_similarity(a, b) {
                Ok(cos) => cos.max(0.0),
                Err(RetrievalError::ZeroVector) => 0.0,
                Err(e) => return Err(e),
            },
            _ => 0.0,
        };
        let pi = paths.path_inference(i, p.lambda_decay);
        let tm = term_match_score(c, q, stats, p, sem)?;
        fuse_scores(cm, vs, pi, tm, &p.fusion)
    })
}

/// Scores all concepts and returns `k` of them chosen by maximal marginal
/// relevance (see [`mmr_select`]).
pub fn retrieve(
    g: &KnowledgeGraph,
    q: &Query,
    stats: &TermStats,
    p: &MatchParams,
    k: usize,
    sem: &dyn TermSimilarity,
) -> Result<Vec<RetrievalResult>, RetrievalError> {
    retrieve_with(g, q, stats, p, k, sem, Parallelism::default())
}

pub fn retrieve_with(
    g: &KnowledgeGraph,
    q: &Query,
    stats: &TermStats,
    p: &MatchParams,
    k: usize,
    sem: &dyn TermSimilarity,
    mode: Parallelism,
) -> Result<Vec<RetrievalResult>, RetrievalError> {
    if g.is_empty() {
        return Err(RetrievalError::EmptyGraph);
    }
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let scores = score_concepts(g, q, stats, p, sem, mode)?;
    let fused: Vec<f64> = scores.iter().map(|s| s.fused).collect();
    let ids: Vec<&ConceptId> = g.concepts().map(|c| &c.id).collect();
    let token_sets: Vec<HashSet<String>> = if p.diversity_lambda < 1.0 {
        g.concepts()
            .map(|c| tokenize(&c.text).into_iter().collect())
            .collect()
    } else {
        Vec::new()
    };
    let picked = mmr_select(&fused, &ids, k, p.diversity_lambda, |a, b| {
        concept_similarity(g.concept_at(a), g.concept_at(b), &token_sets[a], &token_sets[b])
    });
    Ok(picked
        .into_iter()
        .enumerate()
        .map(|(r, i)| RetrievalResult {
            concept: ids[i].clone(),
            scores: scores[i],
            rank: r + 1,
        })
        .collect())
}

fn concept_similarity(
    a: &LegalConcept,
    b: &LegalConcept,
    ta: &HashSet<String>,
    tb: &HashSet<String>,
) -> f64 {
    if let (Some(x), Some(y)) = (&a.embedding, &b.embedding) {
        if let Ok(c) = vector_similarity(x, y) {
            return c;
        }
    }
    jaccard(ta, tb)
}

/// Greedy maximal marginal relevance.
///
/// Relevance is first divided by its maximum so that the trade-off does not
/// depend on the scale of the scores. The first pick is the most relevant
/// candidate; each further pick maximizes
/// `λ·rel − (1−λ)·max_sim(candidate, picked)`. Ties go to the smaller id.
/// Returns indices into `relevance`; at most `k` of them.
pub fn mmr_select<F>(relevance: &[f64], ids: &[&ConceptId], k: usize, lambda: f64, sim: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> f64,
{
    let n = relevance.len();
    let k = k.min(n);
    let max = relevance.iter().copied().fold(0.0, f64::max);
    let rel: Vec<f64> = if max > 0.0 {
        relevance.iter().map(|r| r / max).collect()
    } else {
        relevance.to_vec()
    };
    let better = |a: usize, sa: f64, b: usize, sb: f64| sa > sb || (sa == sb && ids[a] < ids[b]);

    if lambda >= 1.0 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            rel[b].total_cmp(&rel[a]).then_with(|| ids[a].cmp(ids[b]))
        });
        order.truncate(k);
        return order;
    }

    let mut picked: Vec<usize> = Vec::with_capacity(k);
    let mut max_sim = vec![f64::NEG_INFINITY; n];
    let mut taken = vec![false; n];
    while picked.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let score = if picked.is_empty() {
                rel[i]
            } else {
                lambda * rel[i] - (1.0 - lambda) * max_sim[i]
            };
            match best {
                Some((b, sb)) if !better(i, score, b, sb) => {}
                _ => best = Some((i, score)),
            }
        }
        let Some((choice, _)) = best else { break };
        taken[choice] = true;
        picked.push(choice);
        for i in (0..n).filter(|&i| !taken[i]) {
            max_sim[i] = max_sim[i].max(sim(i, choice));
        }
    }
    picked
}
