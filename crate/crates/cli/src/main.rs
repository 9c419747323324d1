use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use privmine::corpus::{filter_by_rating, partition_gold, ReviewCorpus};
use privmine::eval::{
    confusion_from_llm, confusion_from_nli, metrics, random_baseline, select_best, ComparisonTable, MetricsReport,
};
use privmine::hypotheses::PseudoLabel;
use privmine::llm::{self, classify_corpus, maybe_privacy_subset, BinaryLabel, VoteCache, VoteRecord};
use privmine::nli::{
    apply_heuristics, read_matrix_file, read_pseudo_labels, score_corpus, write_pseudo_labels, CacheContext,
    ScoreCache,
};
use privmine::pipeline::{
    annotate_run, exit, export_run, run_extraction, run_selection, CliOverrides, ExportFormat, PipelineConfig,
    PipelineError, TerminalSource,
};

#[derive(Parser)]
#[command(name = "privmine", version, about = "Mine privacy-related app reviews with NLI screening, LLM voting and human confirmation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config (JSON).
    #[arg(long, global = true, default_value = "privmine.json")]
    config: PathBuf,
    /// Hypothesis set to use: builtin id or path.
    #[arg(long, global = true)]
    hypotheses: Option<String>,
    #[arg(long, global = true)]
    nli_endpoint: Option<String>,
    #[arg(long, global = true)]
    llm_endpoint: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_inflight: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    /// The unlabeled extraction corpus.
    Corpus,
    /// The gold-labeled corpus.
    Labeled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Nli,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize a review file into the JSONL schema.
    Ingest {
        #[arg(long, value_enum, default_value = "corpus")]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score reviews against a hypothesis set with the selected NLI backend.
    NliScore {
        #[arg(long, value_enum, default_value = "corpus")]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a score matrix into pseudo-labels.
    NliLabel {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the maybe-privacy reviews with the LLM.
    LlmClassify {
        #[arg(long, value_enum, default_value = "corpus")]
        which: Which,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision, recall and F1 of a stage against the gold labels.
    Evaluate {
        #[arg(long, value_enum)]
        stage: Stage,
        /// Pseudo-labels (nli) or vote records (llm).
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Pick the best NLI backend and hypothesis set on the labeled corpus.
    Select {
        #[arg(long)]
        json: bool,
    },
    /// Run the full extraction flow on the unlabeled corpus.
    Extract,
    /// Label the extracted reviews (keyboard, or the configured script).
    Annotate {
        #[arg(long)]
        scripted: bool,
    },
    /// Write the confirmed privacy reviews with provenance.
    Export {
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&g.config)?;
    cfg.apply(&CliOverrides {
        hypotheses: g.hypotheses.clone(),
        nli_endpoint: g.nli_endpoint.clone(),
        llm_endpoint: g.llm_endpoint.clone(),
        seed: g.seed,
        max_inflight: g.max_inflight,
    })?;
    Ok(cfg)
}

/// Ingests, rating-filters and normalizes the chosen corpus. Labeled input
/// keeps only gold reviews; reviews with no text left are dropped.
fn prepare(cfg: &PipelineConfig, which: Which) -> Result<ReviewCorpus, PipelineError> {
    let (c, default_max) = match which {
        Which::Corpus => (cfg.corpus.as_ref(), 2),
        Which::Labeled => (cfg.labeled_corpus.as_ref(), 5),
    };
    let c = c.ok_or_else(|| PipelineError::Config("the requested corpus is not configured".into()))?;
    let ingested = cfg.ingest(c)?;
    let mut corpus = filter_by_rating(&ingested.corpus, c.min_rating.unwrap_or(1), c.max_rating.unwrap_or(default_max))?;
    let (labeled, unlabeled) = partition_gold(&corpus);
    corpus = match which {
        Which::Corpus => unlabeled,
        Which::Labeled => labeled,
    };
    corpus.normalize_all();
    corpus.reviews.retain(|r| r.text_norm.as_deref().is_some_and(|t| !t.is_empty()));
    corpus.provenance.accepted = corpus.len();
    Ok(corpus)
}

fn or_default(p: &Option<PathBuf>, cfg: &PipelineConfig, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| cfg.output_dir().join(name))
}

fn ensure_parent(p: &Path) -> Result<(), PipelineError> {
    match p.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => std::fs::create_dir_all(d).map_err(|source| PipelineError::Io {
            path: d.to_path_buf(),
            source,
        }),
        None => Ok(()),
    }
}

fn print_table(t: &ComparisonTable, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(t).expect("table serializes"));
    } else {
        print!("{t}");
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Ingest { which, out } => {
            let corpus = prepare(&cfg, which)?;
            let out = or_default(&out, &cfg, "corpus.jsonl");
            ensure_parent(&out)?;
            corpus.write_jsonl(&out)?;
            println!("{} reviews -> {}", corpus.len(), out.display());
        }
        Command::NliScore { which, out } => {
            let corpus = prepare(&cfg, which)?;
            let (_, set) = cfg.extraction_set()?;
            let backend = cfg.build_nli(cfg.nli_backend()?)?;
            let cache_path = cfg.cache_dir().join("nli_scores.jsonl");
            ensure_parent(&cache_path)?;
            let cache = ScoreCache::open(&cache_path, CacheContext::new(backend.descriptor(), &set))?;
            let m = score_corpus(backend.as_ref(), &corpus, &set, Some(&cache))?;
            let out = or_default(&out, &cfg, "scores.bin");
            ensure_parent(&out)?;
            m.write_file(&out)?;
            println!("{} x {} scores -> {}", corpus.len(), set.len(), out.display());
        }
        Command::NliLabel { matrix, out } => {
            let (_, set) = cfg.extraction_set()?;
            let m = read_matrix_file(&or_default(&matrix, &cfg, "scores.bin"))?;
            if m.header().set_hash != set.version_hash() {
                return Err(PipelineError::Config(format!(
                    "matrix was scored with a different hypothesis set than {:?}",
                    set.set_id
                )));
            }
            let labels = apply_heuristics(&m, &set.heuristics)?;
            let out = or_default(&out, &cfg, "pseudo_labels.jsonl");
            write_pseudo_labels(&labels, &out)?;
            for l in [PseudoLabel::MaybePrivacy, PseudoLabel::MaybeNotPrivacy, PseudoLabel::Undetermined] {
                println!("{:<18} {}", l.as_str(), labels.count(l));
            }
        }
        Command::LlmClassify { which, labels, out } => {
            let corpus = prepare(&cfg, which)?;
            let (_, set) = cfg.extraction_set()?;
            let labels = read_pseudo_labels(&or_default(&labels, &cfg, "pseudo_labels.jsonl"))?;
            let candidates = maybe_privacy_subset(&corpus, &labels);
            let backend = cfg.build_llm()?;
            let template = cfg.template()?;
            let system = template.system_message(&set)?;
            let cache_path = cfg.cache_dir().join("llm_votes.jsonl");
            let cache = VoteCache::open(&cache_path, VoteCache::context_key(backend.descriptor(), &system, &cfg.sampling))?;
            let outcome =
                classify_corpus(backend.as_ref(), &candidates, &labels, &set, &template, &cfg.sampling, Some(&cache))?;
            let out = or_default(&out, &cfg, "votes.jsonl");
            ensure_parent(&out)?;
            llm::write_jsonl(&outcome.records, &out)?;
            println!("yes {}  no {}  failed {}", outcome.yes(), outcome.no(), outcome.failures.len());
        }
        Command::Evaluate { stage, predictions, json } => {
            let gold = prepare(&cfg, Which::Labeled)?;
            let (name, report, pool) = match stage {
                Stage::Nli => {
                    let labels = read_pseudo_labels(&predictions)?;
                    let by_id: HashMap<&str, PseudoLabel> =
                        labels.entries.iter().map(|e| (e.review_id.as_str(), e.label)).collect();
                    ("nli", metrics(&confusion_from_nli(&gold, &by_id)?), gold)
                }
                Stage::Llm => {
                    let votes: Vec<VoteRecord> = llm::read_jsonl(&predictions)?;
                    let by_id: HashMap<&str, BinaryLabel> =
                        votes.iter().map(|v| (v.review_id.as_str(), v.decision)).collect();
                    let mut pool = gold.clone();
                    pool.reviews.retain(|r| by_id.contains_key(r.id.as_str()));
                    ("llm", metrics(&confusion_from_llm(&pool, &by_id)?), pool)
                }
            };
            let n_pos = pool.iter().filter(|r| r.gold_label.is_some_and(|g| g.is_privacy())).count();
            let mut rows: Vec<(String, MetricsReport)> = Vec::new();
            if n_pos > 0 {
                rows.push(("random".into(), random_baseline(n_pos, pool.len())?));
            }
            rows.push((name.into(), report));
            let table = select_best(&rows, Some(&rows[0].0))?;
            print_table(&table, json);
        }
        Command::Select { json } => {
            let s = run_selection(&cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&s).expect("selection serializes"));
            } else {
                println!("NLI backends on {}:", cfg.hypotheses.sets[0]);
                print!("{}", s.models);
                println!("\nHypothesis sets with {}:", s.best_backend);
                print!("{}", s.hypothesis_sets);
                println!("\nbest: {} + {}", s.best_backend, s.best_set);
            }
        }
        Command::Extract => {
            let out = run_extraction(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&out.manifest.counts).expect("counts serialize"));
        }
        Command::Annotate { scripted } => {
            let outcome = if scripted {
                let mut src = cfg
                    .scripted_source()?
                    .ok_or_else(|| PipelineError::Config("--scripted needs annotation.script".into()))?;
                annotate_run(&cfg, &mut src)?
            } else {
                let stdin = std::io::stdin();
                let mut src = TerminalSource::new(stdin.lock(), std::io::stdout());
                annotate_run(&cfg, &mut src)?
            };
            if let Some(k) = &outcome.kappa {
                println!("kappa {:.3} over {} doubly-labeled reviews", k.kappa, k.n);
            }
            println!("tiebreaks {}", outcome.tiebreaks);
            if !outcome.complete() {
                return Err(PipelineError::Incomplete {
                    pending: outcome.pending.len(),
                });
            }
        }
        Command::Export { format, out } => {
            let ext = match format {
                ExportFormat::Csv => "csv",
                ExportFormat::Jsonl => "jsonl",
            };
            let out = out.unwrap_or_else(|| cfg.output_dir().join(format!("privacy_reviews.{ext}")));
            let n = export_run(&cfg, format, &out)?;
            println!("{n} reviews -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
