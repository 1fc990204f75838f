//! Three-layer legal knowledge graph.
//!
//! Concepts live in one of three layers (ontology, representation,
//! instance) and are connected by typed, weighted relations. The graph is
//! built once, either from a `.kg.jsonl` stream or from parts, and is
//! read-only afterwards; corpus statistics used by BM25+ (`N`, `avgdl`,
//! document frequencies) are derived at build time and never stored.
//!
//! Relations are stored directed but path queries traverse them in both
//! directions.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::normalize_code;
use crate::freshness::SourceType;
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("empty graph")]
    Empty,
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: relation endpoint \"{id}\" is not a known concept")]
    DanglingEndpoint { line: usize, id: String },
    #[error("relation endpoint \"{0}\" is not a known concept")]
    UnknownEndpoint(String),
    #[error("line {line}: duplicate concept id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("duplicate concept id \"{0}\"")]
    Duplicate(String),
    #[error("line {line}: concept \"{id}\" has embedding dimension {found}, expected {expected}")]
    EmbeddingDimension {
        line: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown concept id \"{0}\"")]
    UnknownId(String),
    #[error("invalid concept id: {0:?}")]
    InvalidId(String),
    #[error("graph violates {} invariant(s): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Identifier of a concept; non-empty and not whitespace-only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl ConceptId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err(GraphError::InvalidId(value));
        }
        Ok(ConceptId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ConceptId {
    type Error = GraphError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        ConceptId::new(value)
    }
}

impl From<ConceptId> for String {
    fn from(id: ConceptId) -> String {
        id.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Ontology,
    Representation,
    Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

impl WeightedTerm {
    pub fn new(term: impl Into<String>, weight: f64) -> Self {
        WeightedTerm {
            term: term.into(),
            weight,
        }
    }
}

/// Provenance metadata of the source a concept was taken from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityRecord {
    pub source_type: SourceType,
    pub institution_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalConcept {
    pub id: ConceptId,
    pub layer: Layer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub terms: Vec<WeightedTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub jurisdictions: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<ConceptId>,
    /// Signed so that a bad record survives loading long enough to be
    /// reported by [`validate_graph`].
    #[serde(default)]
    pub citation_count: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authority: Option<AuthorityRecord>,
}

impl LegalConcept {
    /// A bare concept with only the required fields filled in.
    pub fn new(id: ConceptId, layer: Layer, title: impl Into<String>) -> Self {
        LegalConcept {
            id,
            layer,
            code: None,
            title: title.into(),
            text: String::new(),
            terms: Vec::new(),
            embedding: None,
            jurisdictions: BTreeSet::new(),
            effective_date: None,
            superseded_by: None,
            citation_count: 0,
            authority: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub from: ConceptId,
    pub to: ConceptId,
    #[serde(rename = "type")]
    pub rel_type: String,
    pub weight: f64,
}

impl Relation {
    pub fn new(from: ConceptId, to: ConceptId, rel_type: impl Into<String>, weight: f64) -> Self {
        Relation {
            from,
            to,
            rel_type: rel_type.into(),
            weight,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Concept(LegalConcept),
    Relation(Relation),
}

/// One broken invariant, naming the record it was found on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub record: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.record, self.message)
    }
}

/// Token statistics of one concept text.
#[derive(Debug, Clone, Default)]
pub struct DocStats {
    pub len: usize,
    pub term_freq: HashMap<String, u32>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    concepts: IndexMap<ConceptId, LegalConcept>,
    relations: Vec<Relation>,
    embedding_dim: Option<usize>,
    docs: Vec<DocStats>,
    doc_freq: HashMap<String, usize>,
    avgdl: f64,
    max_citations: i64,
    // (neighbour index, relation index), both directions
    adjacency: Vec<Vec<(usize, usize)>>,
    by_code: HashMap<String, Vec<usize>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.concepts.len() == other.concepts.len()
            && self
                .concepts
                .iter()
                .zip(other.concepts.iter())
                .all(|(a, b)| a == b)
            && self.relations == other.relations
    }
}

impl KnowledgeGraph {
    /// Builds a graph from concepts and relations and derives its corpus
    /// statistics. Codes are normalized. Only structural problems (duplicate
    /// ids, unknown endpoints) fail here; everything else is left for
    /// [`validate_graph`].
    pub fn from_parts(
        concepts: Vec<LegalConcept>,
        relations: Vec<Relation>,
    ) -> Result<Self, GraphError> {
        let mut map = IndexMap::with_capacity(concepts.len());
        for mut concept in concepts {
            if let Some(code) = concept.code.take() {
                let code = normalize_code(&code);
                concept.code = (!code.is_empty()).then_some(code);
            }
            let id = concept.id.clone();
            if map.insert(id.clone(), concept).is_some() {
                return Err(GraphError::Duplicate(id.0));
            }
        }

        let mut adjacency = vec![Vec::new(); map.len()];
        for (ri, rel) in relations.iter().enumerate() {
            let a = map
                .get_index_of(&rel.from)
                .ok_or_else(|| GraphError::UnknownEndpoint(rel.from.0.clone()))?;
            let b = map
                .get_index_of(&rel.to)
                .ok_or_else(|| GraphError::UnknownEndpoint(rel.to.0.clone()))?;
            adjacency[a].push((b, ri));
            if a != b {
                adjacency[b].push((a, ri));
            }
        }

        let docs: Vec<DocStats> = map
            .values()
            .map(|c| {
                let tokens = tokenize(&c.text);
                let mut term_freq = HashMap::new();
                for t in &tokens {
                    *term_freq.entry(t.clone()).or_insert(0) += 1;
                }
                DocStats {
                    len: tokens.len(),
                    term_freq,
                }
            })
            .collect();
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            for t in d.term_freq.keys() {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let avgdl = if docs.is_empty() {
            0.0
        } else {
            docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64
        };

        let mut by_code: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, c) in map.values().enumerate() {
            if let Some(code) = &c.code {
                by_code.entry(code.clone()).or_default().push(i);
            }
        }

        let embedding_dim = map.values().find_map(|c| c.embedding.as_ref().map(Vec::len));
        let max_citations = map.values().map(|c| c.citation_count).max().unwrap_or(0);

        Ok(KnowledgeGraph {
            concepts: map,
            relations,
            embedding_dim,
            docs,
            doc_freq,
            avgdl,
            max_citations,
            adjacency,
            by_code,
        })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Number of concept documents `N`.
    pub fn doc_count(&self) -> usize {
        self.concepts.len()
    }

    /// Mean token count over all concept texts.
    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn max_citations(&self) -> i64 {
        self.max_citations
    }

    pub fn concepts(&self) -> impl ExactSizeIterator<Item = &LegalConcept> + Clone {
        self.concepts.values()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn concept(&self, id: &ConceptId) -> Result<&LegalConcept, GraphError> {
        self.concepts
            .get(id)
            .ok_or_else(|| GraphError::UnknownId(id.0.clone()))
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.concepts.contains_key(id)
    }

    pub fn index_of(&self, id: &ConceptId) -> Result<usize, GraphError> {
        self.concepts
            .get_index_of(id)
            .ok_or_else(|| GraphError::UnknownId(id.0.clone()))
    }

    pub fn concept_at(&self, index: usize) -> &LegalConcept {
        &self.concepts[index]
    }

    pub fn doc_stats(&self, index: usize) -> &DocStats {
        &self.docs[index]
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.by_code.contains_key(code)
    }

    pub fn concepts_with_code(&self, code: &str) -> impl Iterator<Item = &LegalConcept> {
        self.by_code
            .get(code)
            .into_iter()
            .flatten()
            .map(|&i| &self.concepts[i])
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.by_code.keys().map(String::as_str)
    }

    /// Hop-minimal path between `a` and `b`, traversing relations in either
    /// direction. Among hop-minimal paths the one with the largest total
    /// relation weight wins; remaining ties go to the lexicographically
    /// smallest sequence of node ids. `None` when disconnected.
    pub fn shortest_path(
        &self,
        a: &ConceptId,
        b: &ConceptId,
    ) -> Result<Option<GraphPath<'_>>, GraphError> {
        let src = self.index_of(a)?;
        let dst = self.index_of(b)?;
        if src == dst {
            return Ok(Some(GraphPath {
                nodes: vec![&self.concepts[src].id],
                relations: Vec::new(),
            }));
        }
        let dist = self.bfs(src);
        let Some(target_hops) = dist[dst] else {
            return Ok(None);
        };

        // Best (weight sum, node path, relation path) per node, layer by layer.
        type Best = (f64, Vec<usize>, Vec<usize>);
        let mut best: HashMap<usize, Best> = HashMap::new();
        best.insert(src, (0.0, vec![src], Vec::new()));
        let mut frontier = vec![src];
        for hop in 1..=target_hops {
            let mut next: HashMap<usize, Best> = HashMap::new();
            for &u in &frontier {
                let (sum_u, nodes_u, rels_u) = best[&u].clone();
                for &(v, ri) in &self.adjacency[u] {
                    if dist[v] != Some(hop) {
                        continue;
                    }
                    let sum = sum_u + self.relations[ri].weight;
                    let mut nodes = nodes_u.clone();
                    nodes.push(v);
                    let replace = match next.get(&v) {
                        None => true,
                        Some((s, n, _)) => {
                            sum > *s || (sum == *s && self.node_seq_lt(&nodes, n))
                        }
                    };
                    if replace {
                        let mut rels = rels_u.clone();
                        rels.push(ri);
                        next.insert(v, (sum, nodes, rels));
                    }
                }
            }
            let mut layer: Vec<usize> = next.keys().copied().collect();
            layer.sort_unstable();
            frontier = layer;
            best.extend(next);
        }
        let (_, nodes, rels) = &best[&dst];
        Ok(Some(GraphPath {
            nodes: nodes.iter().map(|&i| &self.concepts[i].id).collect(),
            relations: rels.iter().map(|&ri| &self.relations[ri]).collect(),
        }))
    }

    fn node_seq_lt(&self, a: &[usize], b: &[usize]) -> bool {
        let ids = |s: &[usize]| s.iter().map(|&i| &self.concepts[i].id).collect::<Vec<_>>();
        ids(a) < ids(b)
    }

    /// Undirected hop distance from `a` to `b`.
    pub fn hop_distance(&self, a: &ConceptId, b: &ConceptId) -> Result<Option<usize>, GraphError> {
        let src = self.index_of(a)?;
        let dst = self.index_of(b)?;
        Ok(self.bfs(src)[dst])
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.concepts.len()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &(v, _) in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Hop distance and best hop-minimal weight sum from `src` to every
    /// concept, indexed like [`concept_at`](Self::concept_at). The weight
    /// sum agrees with [`shortest_path`](Self::shortest_path) because the
    /// set of hop-minimal paths is the same in both directions.
    pub fn path_profile(&self, src: &ConceptId) -> Result<Vec<Option<PathSummary>>, GraphError> {
        let src = self.index_of(src)?;
        let dist = self.bfs(src);
        let mut sums: Vec<f64> = vec![f64::NEG_INFINITY; self.concepts.len()];
        sums[src] = 0.0;
        let mut order: Vec<usize> = (0..self.concepts.len()).filter(|&i| dist[i].is_some()).collect();
        order.sort_by_key(|&i| dist[i]);
        for &u in &order {
            let du = dist[u].unwrap_or(0);
            for &(v, ri) in &self.adjacency[u] {
                if dist[v] == Some(du + 1) {
                    let s = sums[u] + self.relations[ri].weight;
                    if s > sums[v] {
                        sums[v] = s;
                    }
                }
            }
        }
        Ok(dist
            .into_iter()
            .zip(sums)
            .map(|(d, s)| d.map(|hops| PathSummary { hops, weight_sum: s }))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub hops: usize,
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath<'g> {
    /// Visited concepts, both endpoints included.
    pub nodes: Vec<&'g ConceptId>,
    pub relations: Vec<&'g Relation>,
}

impl GraphPath<'_> {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.relations.iter().map(|r| r.weight).sum()
    }
}

/// Reads a `.kg.jsonl` stream and returns the validated graph.
pub fn load_graph<R: BufRead>(source: R) -> Result<KnowledgeGraph, GraphError> {
    let mut concepts = Vec::new();
    let mut relations = Vec::new();
    let mut seen: HashMap<ConceptId, usize> = HashMap::new();
    let mut relation_lines = Vec::new();
    let mut dim: Option<usize> = None;

    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        match record {
            Record::Concept(c) => {
                if seen.insert(c.id.clone(), lineno).is_some() {
                    return Err(GraphError::DuplicateId {
                        line: lineno,
                        id: c.id.0,
                    });
                }
                if let Some(e) = &c.embedding {
                    if e.is_empty() {
                        return Err(GraphError::Malformed {
                            line: lineno,
                            message: "embedding must not be empty".into(),
                        });
                    }
                    match dim {
                        None => dim = Some(e.len()),
                        Some(d) if d != e.len() => {
                            return Err(GraphError::EmbeddingDimension {
                                line: lineno,
                                id: c.id.0,
                                expected: d,
                                found: e.len(),
                            })
                        }
                        _ => {}
                    }
                }
                concepts.push(c);
            }
            Record::Relation(r) => {
                relation_lines.push(lineno);
                relations.push(r);
            }
        }
    }
    if concepts.is_empty() && relations.is_empty() {
        return Err(GraphError::Empty);
    }
    for (r, &lineno) in relations.iter().zip(&relation_lines) {
        for end in [&r.from, &r.to] {
            if !seen.contains_key(end) {
                return Err(GraphError::DanglingEndpoint {
                    line: lineno,
                    id: end.0.clone(),
                });
            }
        }
    }
    let graph = KnowledgeGraph::from_parts(concepts, relations)?;
    let violations = validate_graph(&graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    Ok(graph)
}

/// Writes `g` as `.kg.jsonl`: concepts first, then relations. Returns the
/// number of records written.
pub fn save_graph<W: Write>(g: &KnowledgeGraph, mut sink: W) -> Result<usize, GraphError> {
    let violations = validate_graph(g);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    let mut count = 0;
    for c in g.concepts.values() {
        write_record(&mut sink, &Record::Concept(c.clone()))?;
        count += 1;
    }
    for r in &g.relations {
        write_record(&mut sink, &Record::Relation(r.clone()))?;
        count += 1;
    }
    sink.flush()?;
    Ok(count)
}

fn write_record<W: Write>(sink: &mut W, record: &Record) -> Result<(), GraphError> {
    let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
    sink.write_all(line.as_bytes())?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Lists every broken graph invariant. Empty means the graph is valid.
pub fn validate_graph(g: &KnowledgeGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if g.concepts.is_empty() {
        out.push(Violation {
            record: "graph".into(),
            message: "graph has no concepts".into(),
        });
    }
    for c in g.concepts.values() {
        let record = format!("concept {}", c.id);
        let mut push = |message: String| {
            out.push(Violation {
                record: record.clone(),
                message,
            })
        };
        if let (Some(e), Some(d)) = (&c.embedding, g.embedding_dim) {
            if e.len() != d {
                push(format!("embedding dimension {} differs from graph dimension {d}", e.len()));
            }
        }
        if let Some(e) = &c.embedding {
            if e.iter().any(|x| !x.is_finite()) {
                push("embedding contains a non-finite value".into());
            }
        }
        for t in &c.terms {
            if !t.weight.is_finite() || t.weight < 0.0 {
                push(format!("term \"{}\" has invalid weight {}", t.term, t.weight));
            }
        }
        if c.citation_count < 0 {
            push(format!("negative citation_count {}", c.citation_count));
        }
        if let Some(s) = &c.superseded_by {
            if !g.concepts.contains_key(s) {
                push(format!("superseded_by refers to unknown concept \"{s}\""));
            }
        }
    }
    for r in &g.relations {
        let record = format!("relation {} -[{}]-> {}", r.from, r.rel_type, r.to);
        if !(r.weight > 0.0 && r.weight <= 1.0) {
            out.push(Violation {
                record: record.clone(),
                message: format!("weight {} outside (0, 1]", r.weight),
            });
        }
        if r.from == r.to {
            out.push(Violation {
                record,
                message: "self-loop".into(),
            });
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn cid(s: &str) -> ConceptId {
        ConceptId::new(s).unwrap()
    }

    pub(crate) fn concept(id: &str, text: &str) -> LegalConcept {
        let mut c = LegalConcept::new(cid(id), Layer::Representation, id);
        c.text = text.into();
        c
    }

    pub(crate) fn rel(a: &str, b: &str, w: f64) -> Relation {
        Relation::new(cid(a), cid(b), "related", w)
    }

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_parts(
            vec![concept("A", ""), concept("B", ""), concept("C", ""), concept("D", "")],
            vec![rel("A", "B", 0.5), rel("B", "C", 0.4)],
        )
        .unwrap()
    }

    const SAMPLE: &str = r#"{"kind":"concept","id":"A","layer":"ontology","title":"Tort","text":"civil wrong"}
{"kind":"concept","id":"B","layer":"representation","code":"art. 1382, CC","title":"Fault liability","text":"whoever causes damage by fault must repair it"}
{"kind":"concept","id":"C","layer":"instance","title":"Case","text":"the court held the driver liable for damage"}
{"kind":"relation","from":"A","to":"B","type":"subsumes","weight":0.5}
{"kind":"relation","from":"B","to":"C","type":"applied_in","weight":0.4}
"#;

    #[test]
    fn loads_sample_and_derives_statistics() {
        let g = load_graph(SAMPLE.as_bytes()).unwrap();
        assert_eq!(g.doc_count(), 3);
        assert_eq!(g.relations().len(), 2);
        assert!((g.avgdl() - (2.0 + 8.0 + 8.0) / 3.0).abs() < 1e-12);
        assert_eq!(g.doc_freq("damage"), 2);
        assert_eq!(g.concept(&cid("B")).unwrap().code.as_deref(), Some("CC-1382"));
        assert!(g.has_code("CC-1382"));
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(matches!(load_graph("".as_bytes()), Err(GraphError::Empty)));
        assert!(matches!(load_graph("\n  \n".as_bytes()), Err(GraphError::Empty)));
    }

    #[test]
    fn dangling_endpoint_names_id_and_line() {
        let src = format!("{SAMPLE}{}\n", r#"{"kind":"relation","from":"A","to":"X","type":"t","weight":0.3}"#);
        let err = load_graph(src.as_bytes()).unwrap_err();
        match &err {
            GraphError::DanglingEndpoint { line, id } => {
                assert_eq!(*line, 6);
                assert_eq!(id, "X");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("\"X\""));
        assert!(err.to_string().contains("line 6"));
    }

    #[test]
    fn malformed_and_duplicate_records_report_lines() {
        let err = load_graph("{\"kind\":\"concept\"\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Malformed { line: 1, .. }));
        let dup = format!("{SAMPLE}{}\n", r#"{"kind":"concept","id":"A","layer":"ontology","title":"again"}"#);
        let err = load_graph(dup.as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateId { line: 6, .. }));
        let blank_id = r#"{"kind":"concept","id":"  ","layer":"ontology","title":"x"}"#;
        assert!(matches!(
            load_graph(blank_id.as_bytes()),
            Err(GraphError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn embedding_dimension_mismatch() {
        let src = r#"{"kind":"concept","id":"A","layer":"ontology","title":"a","embedding":[1.0,0.0]}
{"kind":"concept","id":"B","layer":"ontology","title":"b","embedding":[1.0,0.0,0.0]}"#;
        let err = load_graph(src.as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            GraphError::EmbeddingDimension { line: 2, expected: 2, found: 3, .. }
        ));
    }

    #[test]
    fn invalid_weight_fails_load() {
        let src = SAMPLE.replace("\"weight\":0.4", "\"weight\":1.5");
        assert!(matches!(load_graph(src.as_bytes()), Err(GraphError::Invalid(v)) if v.len() == 1));
    }

    #[test]
    fn shortest_path_chain() {
        let g = chain();
        let p = g.shortest_path(&cid("A"), &cid("C")).unwrap().unwrap();
        assert_eq!(p.hops(), 2);
        assert!((p.weight_sum() - 0.9).abs() < 1e-12);
        let ids: Vec<&str> = p.nodes.iter().map(|n| n.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C"]);

        let p = g.shortest_path(&cid("A"), &cid("A")).unwrap().unwrap();
        assert_eq!(p.hops(), 0);
        assert!(p.relations.is_empty());

        assert!(g.shortest_path(&cid("A"), &cid("D")).unwrap().is_none());
        assert!(matches!(
            g.shortest_path(&cid("A"), &cid("Q")),
            Err(GraphError::UnknownId(_))
        ));
    }

    #[test]
    fn shortest_path_prefers_heavier_then_lexicographic() {
        // A-B-D and A-C-D both 2 hops.
        let mk = |wb: f64, wc: f64| {
            KnowledgeGraph::from_parts(
                vec![concept("A", ""), concept("B", ""), concept("C", ""), concept("D", "")],
                vec![rel("A", "B", wb), rel("B", "D", 0.5), rel("A", "C", wc), rel("C", "D", 0.5)],
            )
            .unwrap()
        };
        let g = mk(0.2, 0.9);
        let p = g.shortest_path(&cid("A"), &cid("D")).unwrap().unwrap();
        assert_eq!(p.nodes[1].as_str(), "C");
        let g = mk(0.5, 0.5);
        let p = g.shortest_path(&cid("A"), &cid("D")).unwrap().unwrap();
        assert_eq!(p.nodes[1].as_str(), "B");
    }

    #[test]
    fn relations_are_traversed_backwards() {
        let g = chain();
        let p = g.shortest_path(&cid("C"), &cid("A")).unwrap().unwrap();
        assert_eq!(p.hops(), 2);
        assert_eq!(g.hop_distance(&cid("C"), &cid("A")).unwrap(), Some(2));
        let prof = g.path_profile(&cid("C")).unwrap();
        let a = prof[g.index_of(&cid("A")).unwrap()].unwrap();
        assert_eq!(a.hops, 2);
        assert!((a.weight_sum - 0.9).abs() < 1e-12);
    }

    #[test]
    fn validation_reports_each_violation() {
        assert!(validate_graph(&chain()).is_empty());

        let g = KnowledgeGraph::from_parts(
            vec![concept("A", ""), concept("B", "")],
            vec![rel("A", "B", 1.5)],
        )
        .unwrap();
        let v = validate_graph(&g);
        assert_eq!(v.len(), 1);
        assert!(v[0].record.contains("A -[related]-> B"));

        let mut bad = concept("A", "");
        bad.citation_count = -1;
        let g = KnowledgeGraph::from_parts(vec![bad, concept("B", "")], vec![]).unwrap();
        let v = validate_graph(&g);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].record, "concept A");
    }

    #[test]
    fn save_writes_one_line_per_record() {
        let g = load_graph(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        assert_eq!(save_graph(&g, &mut buf).unwrap(), 5);
        let back = load_graph(buf.as_slice()).unwrap();
        assert_eq!(back, g);

        let empty = KnowledgeGraph::from_parts(vec![], vec![]).unwrap();
        assert!(matches!(save_graph(&empty, Vec::new()), Err(GraphError::Invalid(_))));
    }

    #[test]
    fn save_reports_sink_failure() {
        struct Broken;
        impl Write for Broken {
            fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("disk full"))
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        assert!(matches!(save_graph(&chain(), Broken), Err(GraphError::Io(_))));
    }
}
