use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lexgraph::graph::{ConceptId, KnowledgeGraph, Layer, LegalConcept, Relation, WeightedTerm};
use lexgraph::relevance::{concept_relevance, RelevanceParams};
use lexgraph::retrieval::{score_concepts, MatchParams, NoSemantics, Query, TermStat, TermStats};
use lexgraph::Parallelism;

const WORDS: [&str; 12] = [
    "contract", "breach", "lease", "tenant", "repair", "damages", "fault", "liability", "court", "termination", "notice", "performance",
];
const DIM: usize = 32;

fn id(i: usize) -> ConceptId {
    ConceptId::new(format!("c{i}")).unwrap()
}

fn synthetic(n: usize) -> (KnowledgeGraph, Query, TermStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let concepts = (0..n)
        .map(|i| {
            let mut c = LegalConcept::new(id(i), Layer::Representation, format!("Concept {i}"));
            c.code = Some(format!("CC-{}-{}", 1000 + i / 4, i % 4));
            c.text = (0..40).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
            c.terms = (0..4).map(|_| WeightedTerm::new(WORDS[rng.random_range(0..WORDS.len())], rng.random_range(0.1..1.0))).collect();
            c.embedding = Some((0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect());
            c.jurisdictions = ["FR".to_string()].into();
            c.citation_count = rng.random_range(0..200);
            c
        })
        .collect();
    let relations = (0..3 * n)
        .map(|_| {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            Relation::new(id(a), id(b), "related", rng.random_range(0.1..1.0))
        })
        .collect();
    let g = KnowledgeGraph::from_parts(concepts, relations).unwrap();

    let mut stats = TermStats::new(1.0).unwrap();
    for (k, w) in WORDS.iter().enumerate() {
        stats
            .insert(w, TermStat { freq_legal: 50 + 10 * k as u64, freq_general: 5, jur_scope: 1.0 })
            .unwrap();
    }
    let q = Query::new("the tenant claims damages for breach of the lease after the repair notice")
        .with_code("CC-1010-2")
        .with_concepts([id(0), id(n / 2)])
        .with_embedding((0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect())
        .with_jurisdictions(["FR"]);
    (g, q, stats)
}

fn bench_scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_concepts");
    for n in [1_000, 10_000] {
        let (g, q, stats) = synthetic(n);
        let p = MatchParams::default();
        for mode in [Parallelism::Sequential, Parallelism::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{mode:?}"), n), &mode, |b, &mode| {
                b.iter(|| score_concepts(black_box(&g), black_box(&q), &stats, &p, &NoSemantics, mode).unwrap())
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("concept_relevance");
    for n in [1_000, 10_000] {
        let (g, q, _) = synthetic(n);
        let ids: Vec<ConceptId> = g.concepts().map(|c| c.id.clone()).collect();
        let p = RelevanceParams::default();
        for mode in [Parallelism::Sequential, Parallelism::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{mode:?}"), n), &mode, |b, &mode| {
                b.iter(|| concept_relevance(black_box(&g), black_box(&q), &ids, &p, mode).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_scoring);
criterion_main!(benches);
