//! End-to-end orchestration: configuration, corpus loading, query
//! analysis and the input, enhancement, generation, assessment,
//! optimization sequence behind `lexgraph query`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::segments;
use crate::freshness::{filter_timely, merge_knowledge, FixtureSearchClient, MergeParams, SearchClient, SearchError};
use crate::graph::{load_graph, ConceptId, GraphError, KnowledgeGraph};
use crate::prompt::{
    assemble_prompt, extract_features, select_task_template, BackgroundEntry, Mode, PromptDocument, PromptError,
    TemplateChoice, TemplateSet, Toggle,
};
use crate::provider::{ChatClientConfig, ChatCompletionClient, CompletionProvider, HashingEmbedder, ProviderError, ScriptedProvider};
use crate::quality::{optimize, Assessor, Iteration, OptimizationConfig, QualityError, QualityReport, QualityWeights};
use crate::relevance::{concept_relevance, rank_scored, RelevanceBreakdown, RelevanceError, RelevanceParams};
use crate::retrieval::{retrieve, EmbeddingTermSimilarity, FusionWeights, MatchParams, Query, RetrievalError, RetrievalResult, Strategy, TermStats};
use crate::text::{contains_run, tokenize};
use crate::par::Parallelism;

pub const REPORT_SCHEMA: &str = "lexgraph.report/v1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Graph {
        path: String,
        #[source]
        source: GraphError,
    },
    #[error("{path}: {source}")]
    Terms {
        path: String,
        #[source]
        source: RetrievalError,
    },
    #[error(transparent)]
    Templates(#[from] PromptError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("query is empty")]
    EmptyQuery,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Input files of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub graph: PathBuf,
    pub terms: PathBuf,
    pub templates: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<PathBuf>,
}

impl CorpusPaths {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.graph);
        join(&mut self.terms);
        join(&mut self.templates);
        self.search.as_mut().map(join);
        self.mock.as_mut().map(join);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Concepts retrieved by the fused strategies.
    pub k: usize,
    /// Of those, concepts placed in the knowledge background; the rest are
    /// held back for expansion.
    pub m: usize,
    /// Jurisdiction of the query and of search filtering.
    pub jurisdiction: Option<String>,
    /// Smoothing of the legal-term weight.
    pub sigma: f64,
    /// Dimension of the hashing embedder when the graph has no embeddings.
    pub embedding_dim: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            k: 6,
            m: 3,
            jurisdiction: None,
            sigma: 1.0,
            embedding_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityParams {
    pub weights: QualityWeights,
    pub threshold: f64,
    pub dimension_floor: f64,
    pub max_iterations: usize,
    pub expand_step: usize,
}

impl Default for QualityParams {
    fn default() -> Self {
        QualityParams {
            weights: QualityWeights::default(),
            threshold: 0.7,
            dimension_floor: 0.6,
            max_iterations: 3,
            expand_step: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    /// Reference date of timeliness filtering; required with a search
    /// fixture so runs stay reproducible.
    pub as_of: Option<NaiveDate>,
    pub merge: MergeParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderParams {
    pub kind: ProviderKind,
    pub http: ChatClientConfig,
}

/// Everything a `query` run needs, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub disable: BTreeSet<Toggle>,
    pub paths: CorpusPaths,
    #[serde(default)]
    pub pipeline: PipelineParams,
    #[serde(default)]
    pub retrieval: MatchParams,
    #[serde(default)]
    pub relevance: RelevanceParams,
    #[serde(default)]
    pub quality: QualityParams,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub provider: ProviderParams,
}

fn default_mode() -> Mode {
    Mode::Complete
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config {
            path: origin.display().to_string(),
            message: e.to_string(),
        })?;
        if let Some(dir) = origin.parent() {
            cfg.paths.resolve(dir);
        }
        cfg.validate().map_err(|message| PipelineError::Config {
            path: origin.display().to_string(),
            message,
        })?;
        Ok(cfg)
    }

    /// Reads the file; relative paths inside it are taken relative to its
    /// directory.
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.pipeline.k == 0 || self.pipeline.m == 0 {
            return Err("pipeline.k and pipeline.m must be at least 1".into());
        }
        if self.pipeline.embedding_dim == 0 {
            return Err("pipeline.embedding_dim must be at least 1".into());
        }
        if self.pipeline.sigma.is_nan() || self.pipeline.sigma <= 0.0 {
            return Err("pipeline.sigma must be positive".into());
        }
        self.retrieval.validate().map_err(|e| e.to_string())?;
        self.relevance.validate().map_err(|e| e.to_string())?;
        self.search.merge.weights.validate().map_err(|e| e.to_string())?;
        if self.paths.search.is_some() && self.search.as_of.is_none() {
            return Err("search.as_of is required when paths.search is set".into());
        }
        Ok(())
    }

    /// Components in effect for the configured mode.
    pub fn toggles(&self) -> BTreeSet<Toggle> {
        self.mode.effective(&self.disable)
    }

    /// Fusion weights with LCM and SVM switched off as configured.
    pub fn fusion_weights(&self) -> Result<FusionWeights, RetrievalError> {
        let on = self.toggles();
        let mut w = self.retrieval.fusion;
        if !on.contains(&Toggle::Lcm) {
            w = w.without(Strategy::CodeMatch)?;
        }
        if !on.contains(&Toggle::Svm) {
            w = w.without(Strategy::VectorSimilarity)?;
        }
        Ok(w)
    }

    pub fn optimization(&self) -> OptimizationConfig {
        OptimizationConfig {
            max_iterations: self.quality.max_iterations,
            expand_step: self.quality.expand_step,
            ..OptimizationConfig::default()
        }
    }
}

/// Loaded, validated corpus shared by all queries of a run.
pub struct Runtime {
    pub graph: KnowledgeGraph,
    pub terms: TermStats,
    pub templates: TemplateSet,
    pub lexicon: HashSet<String>,
    pub embedder: HashingEmbedder,
    pub term_similarity: EmbeddingTermSimilarity,
    pub search: Option<FixtureSearchClient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub concepts: usize,
    pub relations: usize,
    pub doc_count: usize,
    pub avgdl: f64,
    pub vocabulary: usize,
    pub embedding_dim: Option<usize>,
    pub terms: usize,
    pub templates: usize,
    pub search_fixtures: Option<usize>,
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "concepts:   {}", self.concepts)?;
        writeln!(f, "relations:  {}", self.relations)?;
        writeln!(f, "N:          {}", self.doc_count)?;
        writeln!(f, "avgdl:      {:.4}", self.avgdl)?;
        writeln!(f, "vocabulary: {}", self.vocabulary)?;
        match self.embedding_dim {
            Some(d) => writeln!(f, "embedding:  {d}")?,
            None => writeln!(f, "embedding:  none")?,
        }
        writeln!(f, "terms:      {}", self.terms)?;
        write!(f, "templates:  {}", self.templates)?;
        if let Some(n) = self.search_fixtures {
            write!(f, "\nsearch:     {n}")?;
        }
        Ok(())
    }
}

/// Loads and validates every corpus file. Errors name the offending file.
pub fn ingest_corpus(paths: &CorpusPaths, params: &PipelineParams) -> Result<Runtime, PipelineError> {
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(io_err(p));
    let graph = load_graph(open(&paths.graph)?).map_err(|source| PipelineError::Graph {
        path: paths.graph.display().to_string(),
        source,
    })?;
    let terms = TermStats::from_tsv(open(&paths.terms)?, params.sigma).map_err(|source| PipelineError::Terms {
        path: paths.terms.display().to_string(),
        source,
    })?;
    let templates = TemplateSet::from_path(&paths.templates)?;
    templates.resolve_document_count(graph.len())?;
    let search = paths.search.as_deref().map(FixtureSearchClient::from_path).transpose()?;

    let embedder = HashingEmbedder::new(graph.embedding_dim().unwrap_or(params.embedding_dim));
    let mut term_texts: BTreeSet<&str> = BTreeSet::new();
    for c in graph.concepts() {
        term_texts.extend(c.terms.iter().map(|t| t.term.as_str()));
    }
    let term_similarity =
        EmbeddingTermSimilarity::new(term_texts.into_iter().map(|t| (t.to_string(), embedder.embed_text(t))));
    let lexicon = terms.lexicon_tokens();
    log::info!(
        "loaded {} concepts, {} term statistics, {} templates",
        graph.len(),
        terms.len(),
        templates.templates.len()
    );
    Ok(Runtime {
        graph,
        terms,
        templates,
        lexicon,
        embedder,
        term_similarity,
        search,
    })
}

impl Runtime {
    pub fn summary(&self) -> CorpusSummary {
        let mut vocab: HashSet<String> = HashSet::new();
        for c in self.graph.concepts() {
            vocab.extend(tokenize(&c.text));
        }
        CorpusSummary {
            concepts: self.graph.len(),
            relations: self.graph.relations().len(),
            doc_count: self.graph.doc_count(),
            avgdl: self.graph.avgdl(),
            vocabulary: vocab.len(),
            embedding_dim: self.graph.embedding_dim(),
            terms: self.terms.len(),
            templates: self.templates.templates.len(),
            search_fixtures: self.search.as_ref().map(|s| s.fixtures().len()),
        }
    }

    /// Turns raw text into a [`Query`].
    ///
    /// * code: the graph code all of whose segments occur among the query
    ///   tokens, preferring more segments, then the smaller code;
    /// * concepts: concepts whose title occurs as a token run, plus the
    ///   concepts carrying the detected code;
    /// * embedding: hashing embedding of the text when the graph has
    ///   embeddings.
    pub fn analyze(&self, text: &str, jurisdiction: Option<&str>) -> Query {
        let tokens = tokenize(text);
        let token_set: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        let mut best: Option<(usize, &str)> = None;
        for code in self.graph.codes() {
            let segs = segments(code);
            if segs.is_empty() || !segs.iter().all(|s| token_set.contains(s.to_lowercase().as_str())) {
                continue;
            }
            let better = match best {
                None => true,
                Some((n, b)) => segs.len() > n || (segs.len() == n && code < b),
            };
            if better {
                best = Some((segs.len(), code));
            }
        }
        let mut q = Query::new(text);
        let mut ids: BTreeSet<ConceptId> = BTreeSet::new();
        if let Some((_, code)) = best {
            q = q.with_code(code);
            ids.extend(self.graph.concepts_with_code(code).map(|c| c.id.clone()));
        }
        for c in self.graph.concepts() {
            let title = tokenize(&c.title);
            if !title.is_empty() && contains_run(&tokens, &title) {
                ids.insert(c.id.clone());
            }
        }
        q = q.with_concepts(ids);
        if self.graph.embedding_dim().is_some() {
            q = q.with_embedding(self.embedder.embed_text(text));
        }
        if let Some(j) = jurisdiction {
            q = q.with_jurisdictions([j]);
        }
        q
    }
}

/// Builds the completion provider named by the configuration.
pub fn build_provider(
    cfg: &RunConfig,
    wire_trace: Option<Box<dyn std::io::Write + Send>>,
) -> Result<Box<dyn CompletionProvider>, PipelineError> {
    match cfg.provider.kind {
        ProviderKind::Mock => {
            let path = cfg.paths.mock.as_deref().ok_or_else(|| PipelineError::Config {
                path: "provider".into(),
                message: "provider.kind = \"mock\" needs paths.mock".into(),
            })?;
            Ok(Box::new(ScriptedProvider::from_path(path)?))
        }
        ProviderKind::Http => {
            let mut client = ChatCompletionClient::from_env(cfg.provider.http.clone());
            if let Some(sink) = wire_trace {
                client = client.with_trace(sink);
            }
            Ok(Box::new(client))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnalysis {
    pub code: Option<String>,
    pub concepts: Vec<ConceptId>,
    pub jurisdictions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConcept {
    pub concept: ConceptId,
    pub relevance: RelevanceBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub fetched: usize,
    pub retained: usize,
    pub merged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub provider_calls: usize,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub schema: String,
    pub query: String,
    pub mode: Mode,
    pub toggles: BTreeSet<Toggle>,
    pub disabled: BTreeSet<Toggle>,
    pub analysis: QueryAnalysis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateChoice>,
    pub fusion_weights: FusionWeights,
    pub retrieval: Vec<RetrievalResult>,
    /// Over which set the text relevance was min-max normalized.
    pub relevance_normalization: String,
    pub relevance: Vec<RankedConcept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSummary>,
    pub prompt: PromptDocument,
    pub prompt_text: String,
    pub response: String,
    pub quality: QualityReport,
    pub selected_iteration: usize,
    pub iterations: Vec<Iteration>,
    pub timing: Timing,
}

/// Runs one query through the whole pipeline.
pub fn run_query(
    text: &str,
    rt: &Runtime,
    cfg: &RunConfig,
    provider: &dyn CompletionProvider,
) -> Result<QueryReport, PipelineError> {
    if text.trim().is_empty() {
        return Err(PipelineError::EmptyQuery);
    }
    let toggles = cfg.toggles();
    let fusion = cfg.fusion_weights()?;
    let jurisdiction = cfg.pipeline.jurisdiction.as_deref();
    let q = rt.analyze(text, jurisdiction);

    let mut retrieval = Vec::new();
    let mut ranked = Vec::new();
    let mut background = Vec::new();
    let mut reserve = Vec::new();
    let mut search = None;
    if toggles.contains(&Toggle::Kb) {
        let params = MatchParams {
            fusion,
            ..cfg.retrieval.clone()
        };
        retrieval = retrieve(&rt.graph, &q, &rt.terms, &params, cfg.pipeline.k, &rt.term_similarity)?;
        let ids: Vec<ConceptId> = retrieval.iter().map(|r| r.concept.clone()).collect();
        let scored = concept_relevance(&rt.graph, &q, &ids, &cfg.relevance, Parallelism::default())?;
        ranked = rank_scored(scored, ids.len());

        let m = cfg.pipeline.m.min(ranked.len());
        let head: Vec<RetrievalResult> = ranked[..m]
            .iter()
            .enumerate()
            .map(|(i, (id, _))| {
                let scores = retrieval.iter().find(|r| &r.concept == id).expect("ranked from retrieval").scores;
                RetrievalResult {
                    concept: id.clone(),
                    scores,
                    rank: i + 1,
                }
            })
            .collect();
        let relevance_of = |id: &ConceptId| ranked.iter().find(|(c, _)| c == id).map(|(_, b)| *b);

        let merged = match &rt.search {
            Some(client) => {
                let j = jurisdiction.unwrap_or_default();
                let fetched = client.search(text, j)?;
                let as_of = cfg.search.as_of.expect("validated with the search path");
                let retained = filter_timely(&fetched, as_of, j);
                let merged = merge_knowledge(&head, &retained, &rt.graph, &cfg.search.merge)?;
                search = Some(SearchSummary {
                    fetched: fetched.len(),
                    retained: retained.len(),
                    merged: merged.len(),
                });
                merged
            }
            None => merge_knowledge(&head, &[], &rt.graph, &cfg.search.merge)?,
        };
        background = merged.iter().map(|e| BackgroundEntry::from_knowledge(e, relevance_of)).collect();
        let used: HashSet<String> = background.iter().filter_map(|e| e.code.clone()).collect();
        for (id, b) in &ranked[m..] {
            let c = rt.graph.concept(id).map_err(RetrievalError::from)?;
            if c.code.as_ref().is_some_and(|code| used.contains(code)) {
                continue;
            }
            reserve.push(BackgroundEntry::from_concept(c, Some(*b)));
        }
    }

    let (template, choice) = if cfg.mode == Mode::Baseline {
        let generic = rt.templates.template(&rt.templates.generic_template).expect("validated");
        (generic, None)
    } else {
        let features = extract_features(&q, &rt.templates.dimensions, &rt.lexicon);
        let n = rt.templates.resolve_document_count(rt.graph.len())?;
        let choice = select_task_template(&features, &rt.templates, n)?;
        let t = rt.templates.template(&choice.template_id).expect("selected from the set");
        (t, Some(choice))
    };
    let prompt = assemble_prompt(text, template, background, reserve, cfg.mode, &cfg.disable);

    let assessor = Assessor {
        weights: cfg.quality.weights,
        threshold: cfg.quality.threshold,
        dimension_floor: cfg.quality.dimension_floor,
        embedder: Some(&rt.embedder),
        ..Assessor::new(&rt.graph, rt.lexicon.clone())
    };
    let out = optimize(prompt, provider, &assessor, &cfg.optimization())?;

    Ok(QueryReport {
        schema: REPORT_SCHEMA.to_string(),
        query: text.to_string(),
        mode: cfg.mode,
        toggles,
        disabled: cfg.disable.clone(),
        analysis: QueryAnalysis {
            code: q.code.clone(),
            concepts: q.concept_ids.iter().cloned().collect(),
            jurisdictions: q.jurisdictions.iter().cloned().collect(),
        },
        template: choice,
        fusion_weights: fusion,
        retrieval,
        relevance_normalization: "retrieved".to_string(),
        relevance: ranked
            .into_iter()
            .map(|(concept, relevance)| RankedConcept { concept, relevance })
            .collect(),
        search,
        prompt_text: out.prompt.render(),
        prompt: out.prompt,
        response: out.response,
        quality: out.report,
        selected_iteration: out.selected,
        timing: Timing {
            provider_calls: out.trace.len(),
            iterations: out.trace.len(),
            wall_ms: None,
        },
        iterations: out.trace,
    })
}
