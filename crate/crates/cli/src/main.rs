use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use lexgraph::metrics::{evaluate, EvalItem, Metric};
use lexgraph::pipeline::{build_provider, ingest_corpus, run_query, CorpusPaths, PipelineParams, RunConfig};
use lexgraph::prompt::{Mode, Toggle};

#[derive(Parser)]
#[command(name = "lexgraph", version, about = "Knowledge-graph prompt orchestration for legal questions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus, then print its statistics.
    Ingest {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        terms: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        search: Option<PathBuf>,
    },
    /// Run one question through the pipeline and print the JSON report.
    Query {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the mode of the config file.
        #[arg(long)]
        mode: Option<Mode>,
        /// Components to switch off, comma separated: TD,KB,RG,DO,LCM,SVM.
        #[arg(long, value_delimiter = ',')]
        disable: Vec<Toggle>,
        /// Write every iteration (and, for the HTTP provider, every request
        /// and response body) as JSON lines.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value = "lexgraph.trace.jsonl", requires = "trace")]
        trace_file: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-clock time in the report.
        #[arg(long)]
        timing: bool,
        query: String,
    },
    /// Score candidate texts against references, line by line.
    Eval {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        cands: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            graph,
            terms,
            templates,
            search,
        } => {
            let paths = CorpusPaths {
                graph,
                terms,
                templates,
                search,
                mock: None,
            };
            let rt = ingest_corpus(&paths, &PipelineParams::default())?;
            println!("{}", rt.summary());
        }
        Command::Query {
            config,
            mode,
            disable,
            trace,
            trace_file,
            out,
            timing,
            query,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            cfg.disable.extend(disable);
            let started = Instant::now();
            let rt = ingest_corpus(&cfg.paths, &cfg.pipeline)?;

            let trace_sink = if trace {
                Some(File::create(&trace_file).with_context(|| format!("creating {}", trace_file.display()))?)
            } else {
                None
            };
            let wire = match &trace_sink {
                Some(f) => Some(Box::new(f.try_clone()?) as Box<dyn Write + Send>),
                None => None,
            };
            let provider = build_provider(&cfg, wire)?;
            let mut report = run_query(&query, &rt, &cfg, provider.as_ref())?;
            if timing {
                report.timing.wall_ms = Some(started.elapsed().as_millis() as u64);
            }
            if let Some(mut f) = trace_sink {
                for it in &report.iterations {
                    writeln!(f, "{}", serde_json::to_string(it)?)?;
                }
            }
            let json = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(path) => fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
                None => io::stdout().write_all(json.as_bytes())?,
            }
        }
        Command::Eval { refs, cands, json } => {
            let refs = read_items(&refs)?;
            let cands = read_items(&cands)?;
            if refs.len() != cands.len() {
                bail!("{} references but {} candidates", refs.len(), cands.len());
            }
            let report = evaluate(&refs, &cands);
            let mut w = BufWriter::new(io::stdout().lock());
            if json {
                writeln!(w, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                writeln!(w, "pairs        {}", report.pairs)?;
                for (name, v) in [
                    ("sensitivity", report.sensitivity),
                    ("specificity", report.specificity),
                    ("precision", report.precision),
                    ("bleu_1", report.bleu_1),
                    ("bleu_2", report.bleu_2),
                    ("rouge_1", report.rouge_1),
                    ("rouge_2", report.rouge_2),
                    ("rouge_l", report.rouge_l),
                ] {
                    writeln!(w, "{name:<12} {}", Metric(v))?;
                }
            }
        }
    }
    Ok(())
}

/// One item per line: a JSON object `{"text": ..., "label": ...}` or plain
/// text.
fn read_items(path: &Path) -> Result<Vec<EvalItem>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    raw.lines()
        .enumerate()
        .map(|(i, line)| {
            if line.trim_start().starts_with('{') {
                serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))
            } else {
                Ok(EvalItem {
                    text: line.to_string(),
                    label: None,
                })
            }
        })
        .collect()
}

