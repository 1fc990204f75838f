//! Fills in concept embeddings of a graph file with the hashing embedder.
//!
//!     cargo run -p lexgraph-core --example embed_corpus -- corpus/sample.kg.jsonl 32
//!
//! The file is rewritten in place; existing embeddings are replaced.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use lexgraph::graph::{load_graph, save_graph, KnowledgeGraph};
use lexgraph::provider::HashingEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().ok_or("usage: embed_corpus <graph.jsonl> [dim]")?;
    let dim: usize = args.next().map(|d| d.parse()).transpose()?.unwrap_or(32);

    let g = load_graph(BufReader::new(File::open(&path)?))?;
    let e = HashingEmbedder::new(dim);
    let concepts = g
        .concepts()
        .map(|c| {
            let mut c = c.clone();
            c.embedding = Some(e.embed_text(&format!("{} {}", c.title, c.text)));
            c
        })
        .collect();
    let g = KnowledgeGraph::from_parts(concepts, g.relations().to_vec())?;
    let n = save_graph(&g, BufWriter::new(File::create(&path)?))?;
    println!("wrote {n} records to {path}");
    Ok(())
}
