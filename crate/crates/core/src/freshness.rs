//! Timeliness filtering, authority scoring and merging of external search
//! results with graph retrieval.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::normalize_code;
use crate::graph::{ConceptId, KnowledgeGraph};
use crate::retrieval::{check_simplex, RetrievalResult};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid authority weights: {0}")]
    Weights(String),
    #[error("search fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("search client failure: {0}")]
    Client(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceType {
    Statute,
    Regulation,
    CaseLaw,
    Commentary,
}

impl SourceType {
    pub const COUNT: usize = 4;

    /// Statute 4, Regulation 3, CaseLaw 2, Commentary 1.
    pub fn rank(self) -> u32 {
        match self {
            SourceType::Statute => 4,
            SourceType::Regulation => 3,
            SourceType::CaseLaw => 2,
            SourceType::Commentary => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub source_type: SourceType,
    /// 1 is the highest institution.
    pub institution_level: u32,
    #[serde(default)]
    pub citation_frequency: u64,
    pub jurisdiction: String,
    pub effective_date: NaiveDate,
    #[serde(default)]
    pub superseded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

/// Source of live legal search results.
pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str, jurisdiction: &str) -> Result<Vec<SearchResult>, SearchError>;
}

/// Returns the fixture list verbatim for every query.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearchClient {
    fixtures: Vec<SearchResult>,
}

impl FixtureSearchClient {
    pub fn new(fixtures: Vec<SearchResult>) -> Self {
        FixtureSearchClient { fixtures }
    }

    pub fn from_path(path: &Path) -> Result<Self, SearchError> {
        let err = |message: String| SearchError::Fixture {
            path: path.display().to_string(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let fixtures = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
        Ok(Self::new(fixtures))
    }

    pub fn fixtures(&self) -> &[SearchResult] {
        &self.fixtures
    }
}

impl SearchClient for FixtureSearchClient {
    fn search(&self, _query: &str, _jurisdiction: &str) -> Result<Vec<SearchResult>, SearchError> {
        Ok(self.fixtures.clone())
    }
}

/// Weights of source type, institution level and citation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthorityWeights {
    pub source_type: f64,
    pub institution: f64,
    pub citations: f64,
}

impl Default for AuthorityWeights {
    fn default() -> Self {
        AuthorityWeights {
            source_type: 1.0 / 3.0,
            institution: 1.0 / 3.0,
            citations: 1.0 / 3.0,
        }
    }
}

impl AuthorityWeights {
    pub fn validate(&self) -> Result<(), SearchError> {
        check_simplex(&[self.source_type, self.institution, self.citations], "authority weights")
            .map_err(|e| SearchError::Weights(e.to_string()))
    }
}

/// `w1·rank(type)/4 + w2/institution_level + w3·citations/max(1, max_citations)`.
pub fn authority_score(
    r: &SearchResult,
    w: &AuthorityWeights,
    max_citations: u64,
) -> Result<f64, SearchError> {
    w.validate()?;
    let type_part = f64::from(r.source_type.rank()) / SourceType::COUNT as f64;
    let level_part = 1.0 / f64::from(r.institution_level.max(1));
    let cite_part = (r.citation_frequency as f64 / max_citations.max(1) as f64).min(1.0);
    let score = w.source_type * type_part + w.institution * level_part + w.citations * cite_part;
    Ok(score.clamp(0.0, 1.0))
}

/// Drops superseded results, results not yet in force on `as_of`, and
/// results from another jurisdiction. Order is preserved.
pub fn filter_timely(results: &[SearchResult], as_of: NaiveDate, jurisdiction: &str) -> Vec<SearchResult> {
    results
        .iter()
        .filter(|r| !r.superseded && r.effective_date <= as_of && r.jurisdiction == jurisdiction)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Graph { concept: ConceptId, rank: usize },
    Search { authority: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub code: Option<String>,
    pub title: String,
    pub text: String,
    #[serde(flatten)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeParams {
    pub weights: AuthorityWeights,
    /// Authority assumed for graph entries when comparing with search hits.
    pub graph_authority: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            weights: AuthorityWeights::default(),
            graph_authority: 0.5,
        }
    }
}

/// Merges graph hits (in rank order) with already-filtered search hits.
///
/// Entries are deduplicated by normalized code. A graph entry keeps its
/// slot unless a search hit with the same code has strictly higher
/// authority than `graph_authority`, in which case the search hit takes the
/// slot. Remaining search hits follow, by descending authority.
pub fn merge_knowledge(
    graph_hits: &[RetrievalResult],
    search_hits: &[SearchResult],
    g: &KnowledgeGraph,
    params: &MergeParams,
) -> Result<Vec<KnowledgeEntry>, SearchError> {
    params.weights.validate()?;
    let max_citations = search_hits.iter().map(|r| r.citation_frequency).max().unwrap_or(0);

    // Best search hit per code, first-seen wins ties.
    let mut scored: Vec<(usize, Option<String>, f64)> = Vec::with_capacity(search_hits.len());
    for (i, r) in search_hits.iter().enumerate() {
        let code = r.code.as_deref().map(normalize_code).filter(|c| !c.is_empty());
        scored.push((i, code, authority_score(r, &params.weights, max_citations)?));
    }
    let mut best_by_code: HashMap<String, (usize, f64)> = HashMap::new();
    for (i, code, a) in &scored {
        if let Some(code) = code {
            match best_by_code.get(code) {
                Some((_, b)) if *b >= *a => {}
                _ => {
                    best_by_code.insert(code.clone(), (*i, *a));
                }
            }
        }
    }

    let search_entry = |i: usize, code: Option<String>, authority: f64| {
        let r = &search_hits[i];
        KnowledgeEntry {
            code,
            title: r.title.clone().unwrap_or_default(),
            text: r.text.clone(),
            provenance: Provenance::Search { authority },
        }
    };

    let mut out = Vec::new();
    let mut used_codes: HashSet<String> = HashSet::new();
    for hit in graph_hits {
        let Ok(c) = g.concept(&hit.concept) else { continue };
        if let Some(code) = &c.code {
            if !used_codes.insert(code.clone()) {
                continue;
            }
            if let Some(&(i, a)) = best_by_code.get(code) {
                if a > params.graph_authority {
                    out.push(search_entry(i, Some(code.clone()), a));
                    continue;
                }
            }
        }
        out.push(KnowledgeEntry {
            code: c.code.clone(),
            title: c.title.clone(),
            text: c.text.clone(),
            provenance: Provenance::Graph {
                concept: c.id.clone(),
                rank: hit.rank,
            },
        });
    }

    let mut rest: Vec<&(usize, Option<String>, f64)> = scored
        .iter()
        .filter(|(i, code, _)| match code {
            Some(code) => !used_codes.contains(code) && best_by_code.get(code).map(|b| b.0) == Some(*i),
            None => true,
        })
        .collect();
    rest.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    for (i, code, a) in rest {
        out.push(search_entry(*i, code.clone(), *a));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::{cid, concept};
    use crate::retrieval::StrategyScores;

    fn result(t: SourceType, level: u32, cites: u64) -> SearchResult {
        SearchResult {
            source_type: t,
            institution_level: level,
            citation_frequency: cites,
            jurisdiction: "FR".into(),
            effective_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            superseded: false,
            code: None,
            title: None,
            text: "text".into(),
        }
    }

    #[test]
    fn authority_examples() {
        let w = AuthorityWeights::default();
        let s = authority_score(&result(SourceType::Statute, 1, 10), &w, 10).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        let s = authority_score(&result(SourceType::Commentary, 4, 0), &w, 10).unwrap();
        assert!((s - 1.0 / 6.0).abs() < 1e-6);
        let only_type = AuthorityWeights {
            source_type: 1.0,
            institution: 0.0,
            citations: 0.0,
        };
        let s = authority_score(&result(SourceType::Regulation, 3, 0), &only_type, 0).unwrap();
        assert!((s - 0.75).abs() < 1e-12);
        let bad = AuthorityWeights {
            source_type: 0.5,
            institution: 0.5,
            citations: 0.5,
        };
        assert!(authority_score(&result(SourceType::Statute, 1, 0), &bad, 0).is_err());
    }

    #[test]
    fn timeliness_filter() {
        let as_of = NaiveDate::from_ymd_opt(2024, 6, 1).unwrap();
        let mut old = result(SourceType::Statute, 1, 0);
        old.superseded = true;
        let mut future = result(SourceType::Statute, 1, 0);
        future.effective_date = NaiveDate::from_ymd_opt(2025, 1, 1).unwrap();
        let mut foreign = result(SourceType::Statute, 1, 0);
        foreign.jurisdiction = "DE".into();
        let mut keep1 = result(SourceType::CaseLaw, 2, 3);
        keep1.text = "first".into();
        let mut keep2 = result(SourceType::Statute, 1, 1);
        keep2.text = "second".into();
        keep2.effective_date = as_of;
        let input = vec![old, keep1.clone(), future, foreign, keep2.clone()];
        assert_eq!(filter_timely(&input, as_of, "FR"), vec![keep1, keep2]);
    }

    fn graph_hits(g: &KnowledgeGraph) -> Vec<RetrievalResult> {
        let s = StrategyScores { cm: 0.0, vs: 0.0, pi: 0.0, tm: 0.0, fused: 0.0 };
        g.concepts()
            .enumerate()
            .map(|(i, c)| RetrievalResult { concept: c.id.clone(), scores: s, rank: i + 1 })
            .collect()
    }

    fn coded(id: &str, code: &str) -> crate::graph::LegalConcept {
        let mut c = concept(id, id);
        c.code = Some(code.into());
        c
    }

    #[test]
    fn merge_rules() {
        let g = KnowledgeGraph::from_parts(vec![coded("A", "CC-1382"), coded("B", "CC-1240")], vec![]).unwrap();
        let hits = graph_hits(&g);
        let p = MergeParams::default();

        let out = merge_knowledge(&hits, &[], &g, &p).unwrap();
        assert_eq!(out.len(), 2);
        assert!(matches!(&out[0].provenance, Provenance::Graph { concept, rank: 1 } if concept == &cid("A")));

        let mut disjoint = result(SourceType::Statute, 1, 5);
        disjoint.code = Some("tax 07".into());
        let out = merge_knowledge(&hits, std::slice::from_ref(&disjoint), &g, &p).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].code.as_deref(), Some("TAX-07"));

        // Same code, authority 0.9 > 0.5: search hit replaces graph entry.
        let mut strong = result(SourceType::Statute, 1, 0);
        strong.code = Some("CC 1382".into());
        strong.text = "amended text".into();
        let w = AuthorityWeights { source_type: 0.9, institution: 0.1, citations: 0.0 };
        let strong_p = MergeParams { weights: w, graph_authority: 0.5 };
        let out = merge_knowledge(&hits, std::slice::from_ref(&strong), &g, &strong_p).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].text, "amended text");
        assert!(matches!(out[0].provenance, Provenance::Search { authority } if (authority - 1.0).abs() < 1e-12));

        // Weak duplicate is dropped, graph entry kept.
        let mut weak = result(SourceType::Commentary, 4, 0);
        weak.code = Some("CC-1382".into());
        let out = merge_knowledge(&hits, &[weak], &g, &p).unwrap();
        assert_eq!(out.len(), 2);
        assert!(matches!(out[0].provenance, Provenance::Graph { .. }));
    }

    #[test]
    fn fixture_client_replays_verbatim() {
        let fixtures = vec![result(SourceType::Statute, 1, 0), result(SourceType::CaseLaw, 2, 9)];
        let client = FixtureSearchClient::new(fixtures.clone());
        assert_eq!(client.search("anything", "FR").unwrap(), fixtures);
    }
}
