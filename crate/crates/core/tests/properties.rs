use std::collections::{BTreeSet, HashSet};

use chrono::NaiveDate;
use proptest::prelude::*;

use lexgraph::codes::normalize_code;
use lexgraph::freshness::{authority_score, filter_timely, merge_knowledge, AuthorityWeights, MergeParams, SearchResult, SourceType};
use lexgraph::graph::{load_graph, save_graph, ConceptId, KnowledgeGraph, Layer, LegalConcept, Relation};
use lexgraph::metrics::{bleu_n, rouge_l, rouge_n};
use lexgraph::relevance::{bm25_plus_term, concept_relevance, rank_background, Bm25Params, RelevanceParams};
use lexgraph::retrieval::{fuse_scores, mmr_select, retrieve_with, vector_similarity, FusionWeights, MatchParams, NoSemantics, Query, RetrievalResult, TermStats};
use lexgraph::Parallelism;

fn id(i: usize) -> ConceptId {
    ConceptId::new(format!("n{i}")).unwrap()
}

const WORDS: [&str; 8] = ["contract", "damage", "fault", "lease", "tenant", "repair", "court", "liability"];

fn arb_graph(max_nodes: usize) -> impl Strategy<Value = KnowledgeGraph> {
    (1..=max_nodes)
        .prop_flat_map(|n| {
            let concepts = prop::collection::vec(
                (
                    prop::collection::vec(0..WORDS.len(), 0..6),
                    prop::option::of(0..3usize),
                    0..50i64,
                    prop::collection::vec(-1.0..1.0f64, 3),
                ),
                n,
            );
            let edges = prop::collection::vec((0..n, 0..n, 0.05..=1.0f64), 0..(2 * n));
            (concepts, edges)
        })
        .prop_map(|(concepts, edges)| {
            let cs: Vec<LegalConcept> = concepts
                .into_iter()
                .enumerate()
                .map(|(i, (words, code, cites, emb))| {
                    let mut c = LegalConcept::new(id(i), [Layer::Ontology, Layer::Representation, Layer::Instance][i % 3], format!("Concept {i}"));
                    c.text = words.iter().map(|w| WORDS[*w]).collect::<Vec<_>>().join(" ");
                    c.code = code.map(|k| format!("CC-{}", 100 + k * 7 + i));
                    c.citation_count = cites;
                    c.embedding = Some(emb);
                    c
                })
                .collect();
            let rels = edges
                .into_iter()
                .filter(|(a, b, _)| a != b)
                .map(|(a, b, w)| Relation::new(id(a), id(b), "related", w))
                .collect();
            KnowledgeGraph::from_parts(cs, rels).unwrap()
        })
}

proptest! {
    #[test]
    fn code_normalization_is_idempotent(s in "\\PC{0,24}") {
        let once = normalize_code(&s);
        prop_assert_eq!(normalize_code(&once), once);
    }

    #[test]
    fn graph_save_load_round_trip(g in arb_graph(8)) {
        let mut buf = Vec::new();
        save_graph(&g, &mut buf).unwrap();
        let back = load_graph(buf.as_slice()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn fused_score_is_convex_and_monotone(
        s in prop::array::uniform4(0.0..=1.0f64),
        raw in prop::array::uniform4(0.0..=1.0f64),
        which in 0..4usize,
        bump in 0.0..=1.0f64,
    ) {
        let sum: f64 = raw.iter().sum();
        prop_assume!(sum > 1e-6);
        let w = FusionWeights::from_array(raw.map(|x| x / sum));
        let f = fuse_scores(s[0], s[1], s[2], s[3], &w).unwrap().fused;
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= f && f <= hi);
        let mut t = s;
        t[which] = (t[which] + bump).min(1.0);
        let g = fuse_scores(t[0], t[1], t[2], t[3], &w).unwrap().fused;
        prop_assert!(g >= f);
    }

    #[test]
    fn cosine_symmetric_and_scale_free(
        a in prop::collection::vec(-5.0..5.0f64, 4),
        b in prop::collection::vec(-5.0..5.0f64, 4),
        k in 0.01..100.0f64,
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let ab = vector_similarity(&a, &b).unwrap();
        let ba = vector_similarity(&b, &a).unwrap();
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!((ab - vector_similarity(&scaled, &b).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn bm25_term_monotone_and_length_free_without_b(
        idf in 0.01..5.0f64,
        f in 1.0..50.0f64,
        len in 1.0..200.0f64,
        other in 1.0..200.0f64,
        avgdl in 1.0..100.0f64,
    ) {
        let p = Bm25Params::default();
        prop_assert!(bm25_plus_term(idf, f + 1.0, len, avgdl, &p) >= bm25_plus_term(idf, f, len, avgdl, &p));
        let p0 = Bm25Params { b: 0.0, ..p };
        prop_assert_eq!(bm25_plus_term(idf, f, len, avgdl, &p0), bm25_plus_term(idf, f, other, avgdl, &p0));
    }

    #[test]
    fn retrieval_scores_are_bounded(g in arb_graph(8), words in prop::collection::vec(0..WORDS.len(), 0..5), anchor in 0..8usize) {
        let text = words.iter().map(|w| WORDS[*w]).collect::<Vec<_>>().join(" ");
        let mut q = Query::new(text).with_code("CC-107").with_embedding(vec![0.3, -0.2, 0.9]);
        if anchor < g.len() {
            q = q.with_concepts([id(anchor)]);
        }
        let stats = TermStats::new(1.0).unwrap();
        let res = retrieve_with(&g, &q, &stats, &MatchParams::default(), 100, &NoSemantics, Parallelism::Sequential).unwrap();
        prop_assert_eq!(res.len(), g.len());
        for r in &res {
            for x in [r.scores.cm, r.scores.vs, r.scores.pi, r.scores.tm, r.scores.fused] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
        let par = retrieve_with(&g, &q, &stats, &MatchParams::default(), 100, &NoSemantics, Parallelism::Parallel).unwrap();
        prop_assert_eq!(par, res);
    }

    #[test]
    fn mmr_without_diversity_is_a_full_sort(rel in prop::collection::vec(0.0..1.0f64, 1..20), k in 1..25usize) {
        let ids: Vec<ConceptId> = (0..rel.len()).map(id).collect();
        let refs: Vec<&ConceptId> = ids.iter().collect();
        let got = mmr_select(&rel, &refs, k, 1.0, |_, _| 0.0);
        let mut want: Vec<usize> = (0..rel.len()).collect();
        want.sort_by(|&a, &b| rel[b].partial_cmp(&rel[a]).unwrap().then(ids[a].cmp(&ids[b])));
        want.truncate(k);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn relevance_ranking_ignores_candidate_order(g in arb_graph(8), seed in any::<u64>(), m in 1..10usize) {
        let q = Query::new("contract damage lease").with_concepts([id(0)]).with_jurisdictions(["FR"]);
        let ids: Vec<ConceptId> = g.concepts().map(|c| c.id.clone()).collect();
        let p = RelevanceParams::default();
        let a = rank_background(&g, &q, &ids, &p, m).unwrap();
        let mut shuffled = ids.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize).wrapping_mul(31).wrapping_add(i * 17) % (i + 1));
        }
        let b = rank_background(&g, &q, &shuffled, &p, m).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), m.min(ids.len()));
        for w in a.windows(2) {
            prop_assert!(w[0].1.total > w[1].1.total || (w[0].1.total == w[1].1.total && w[0].0 < w[1].0));
        }
        for (_, r) in concept_relevance(&g, &q, &ids, &p, Parallelism::Sequential).unwrap() {
            let expected = 0.4 * r.r_text + 0.3 * r.r_kg + 0.15 * r.r_case + 0.15 * r.r_jur;
            prop_assert!((r.total - expected).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&r.total));
        }
    }

    #[test]
    fn authority_bounded_and_monotone(
        kind in 0..4usize,
        level in 1..6u32,
        c in 0..100u64,
        extra in 0..100u64,
        raw in prop::array::uniform3(0.0..=1.0f64),
    ) {
        let sum: f64 = raw.iter().sum();
        prop_assume!(sum > 1e-6);
        let w = AuthorityWeights { source_type: raw[0] / sum, institution: raw[1] / sum, citations: raw[2] / sum };
        let r = result(kind, level, c, "FR", "2020-01-01", false, None);
        let more = SearchResult { citation_frequency: c + extra, ..r.clone() };
        let max = c + extra;
        let a = authority_score(&r, &w, max).unwrap();
        let b = authority_score(&more, &w, max).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b >= a);
    }

    #[test]
    fn timely_filter_keeps_a_subsequence(items in prop::collection::vec((0..4usize, any::<bool>(), 2000..2040i32, any::<bool>()), 0..12)) {
        let rs: Vec<SearchResult> = items
            .iter()
            .enumerate()
            .map(|(i, (k, sup, year, fr))| {
                result(*k, 1 + i as u32 % 3, i as u64, if *fr { "FR" } else { "DE" }, &format!("{year}-06-01"), *sup, Some(format!("CC-{i}")))
            })
            .collect();
        let as_of = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let kept = filter_timely(&rs, as_of, "FR");
        let mut it = rs.iter();
        for k in &kept {
            prop_assert!(it.any(|r| r == k));
            prop_assert!(!k.superseded && k.effective_date <= as_of && k.jurisdiction == "FR");
        }
    }

    #[test]
    fn merged_knowledge_has_unique_codes(g in arb_graph(8), codes in prop::collection::vec(0..20usize, 0..10)) {
        let hits: Vec<RetrievalResult> = g
            .concepts()
            .enumerate()
            .map(|(i, c)| RetrievalResult { concept: c.id.clone(), scores: fuse_scores(0.0, 0.0, 0.0, 0.0, &FusionWeights::default()).unwrap(), rank: i + 1 })
            .collect();
        let search: Vec<SearchResult> = codes
            .iter()
            .enumerate()
            .map(|(i, k)| result(i % 4, 1 + (i as u32 % 3), *k as u64, "FR", "2020-01-01", false, Some(format!("CC-{}", 100 + k))))
            .collect();
        let merged = merge_knowledge(&hits, &search, &g, &MergeParams::default()).unwrap();
        let mut seen = HashSet::new();
        for e in &merged {
            if let Some(c) = &e.code {
                prop_assert!(seen.insert(c.clone()), "duplicate {}", c);
            }
        }
        let alone = merge_knowledge(&hits, &[], &g, &MergeParams::default()).unwrap();
        let graph_ids: Vec<ConceptId> = alone
            .iter()
            .map(|e| match &e.provenance {
                lexgraph::freshness::Provenance::Graph { concept, .. } => concept.clone(),
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        let codes_seen: BTreeSet<&String> = g.concepts().filter_map(|c| c.code.as_ref()).collect();
        prop_assert!(graph_ids.len() <= g.len() && graph_ids.len() >= codes_seen.len());
    }

    #[test]
    fn text_metrics_are_bounded(
        a in prop::collection::vec(0..5usize, 0..12),
        b in prop::collection::vec(0..5usize, 0..12),
    ) {
        let ta: Vec<&str> = a.iter().map(|i| WORDS[*i]).collect();
        let tb: Vec<&str> = b.iter().map(|i| WORDS[*i]).collect();
        for s in [bleu_n(&ta, &tb, 1), bleu_n(&ta, &tb, 2), rouge_n(&ta, &tb, 1), rouge_n(&ta, &tb, 2), rouge_l(&ta, &tb)] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
        let l = rouge_l(&ta, &tb);
        prop_assert_eq!(l == 1.0, !ta.is_empty() && ta == tb);
        if !ta.is_empty() {
            prop_assert_eq!(bleu_n(&ta, &ta, 1), 1.0);
        }
    }
}

fn result(kind: usize, level: u32, cites: u64, jur: &str, date: &str, superseded: bool, code: Option<String>) -> SearchResult {
    SearchResult {
        source_type: [SourceType::Statute, SourceType::Regulation, SourceType::CaseLaw, SourceType::Commentary][kind],
        institution_level: level,
        citation_frequency: cites,
        jurisdiction: jur.into(),
        effective_date: date.parse().unwrap(),
        superseded,
        code,
        title: None,
        text: "text".into(),
    }
}
