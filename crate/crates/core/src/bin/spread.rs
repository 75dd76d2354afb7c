use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use spread_rag::harness::{
    generate_synthetic_corpus, measure_efficiency, run_experiment, score_records, train_model,
    Experiment, ExperimentConfig, ModelKind, SyntheticSpec,
};
use spread_rag::metrics::{read_answer_records, write_answer_records, write_summary_csv, MetricReport};
use spread_rag::model::save_checkpoint;
use spread_rag::retrieval::{read_corpus, EmbedderKind, RetrievalIndex};
use spread_rag::scheduler::StrategyKind;

#[derive(Parser)]
#[command(name = "spread", version, about = "Retrieval-augmented masked-diffusion generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus, evaluation set, answer key and training set.
    Synth(SynthArgs),
    /// Train the toy transformer on a QA training set.
    Train(TrainArgs),
    /// Chunk and embed a corpus into a retrieval index.
    Index(IndexArgs),
    /// Retrieve, generate and score every query under every strategy.
    Run(RunArgs),
    /// Time generation per strategy.
    Bench(BenchArgs),
    /// Recompute metrics for an existing answers file.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
    #[arg(long)]
    n_documents: Option<usize>,
    #[arg(long)]
    sentences_per_doc: Option<usize>,
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    distractor_ratio: Option<f64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Flags shared by every command that reads an experiment configuration.
/// Values given here override the config file.
#[derive(Args)]
struct ConfigArgs {
    /// TOML file with any of the settings below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = parse_model_kind)]
    model_kind: Option<ModelKind>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<StrategyKind>>,
    #[arg(long)]
    diffusion_steps: Option<usize>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long, value_parser = parse_embedder_kind)]
    embedder: Option<EmbedderKind>,
    #[arg(long)]
    embedder_dim: Option<usize>,
    #[arg(long)]
    embedder_endpoint: Option<String>,
    #[arg(long)]
    prompt_width: Option<usize>,
    #[arg(long)]
    encoder_dim: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_model_kind(s: &str) -> Result<ModelKind, String> {
    match s {
        "checkpoint" => Ok(ModelKind::Checkpoint),
        "table-oracle" => Ok(ModelKind::TableOracle),
        _ => Err(format!("unknown model kind {s:?}; expected checkpoint or table-oracle")),
    }
}

fn parse_embedder_kind(s: &str) -> Result<EmbedderKind, String> {
    match s {
        "hash" => Ok(EmbedderKind::Hash),
        "remote" => Ok(EmbedderKind::Remote),
        _ => Err(format!("unknown embedder {s:?}; expected hash or remote")),
    }
}

macro_rules! set {
    ($cfg:expr, $args:expr, $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        set!(cfg, self, corpus, dataset, model, model_kind, strategies, diffusion_steps, max_new_tokens,
             temperature, top_k, chunk_size, encoder_dim, output_dir, workers);
        if self.index.is_some() {
            cfg.index = self.index.clone();
        }
        if self.prompt_width.is_some() {
            cfg.prompt_width = self.prompt_width;
        }
        if let Some(k) = self.embedder {
            cfg.embedder.kind = k;
        }
        if let Some(d) = self.embedder_dim {
            cfg.embedder.dim = d;
        }
        if self.embedder_endpoint.is_some() {
            cfg.embedder.endpoint = self.embedder_endpoint.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Training QA records.
    #[arg(long)]
    train_dataset: Option<PathBuf>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Where to write the training report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "index.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 20)]
    timed: usize,
    /// Where to write the timing report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Answers file written by `run`.
    #[arg(long)]
    answers: PathBuf,
    #[arg(long, default_value_t = 4096)]
    encoder_dim: usize,
    #[arg(long, default_value = "rescored")]
    out_dir: PathBuf,
}

fn print_report(report: &MetricReport) {
    println!(
        "{:<15} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9}",
        "strategy", "P", "R", "F1", "RSD", "CR", "Red", "time(s)"
    );
    for s in &report.summaries {
        let rsd = s.rsd.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<15} {:>7.4} {:>7.4} {:>7.4} {:>7} {:>7.4} {:>7.4} {:>9.4}",
            s.strategy, s.precision, s.recall, s.f1, rsd, s.copy_rate, s.redundancy, s.avg_time_s
        );
    }
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let mut spec = SyntheticSpec::default();
    set!(spec, args, n_documents, sentences_per_doc, n_queries, distractor_ratio, vocab_size, seed);
    let corpus = generate_synthetic_corpus(&spec)?;
    corpus.write(&args.out_dir)?;
    println!(
        "wrote {} documents, {} queries, {} training records to {}",
        corpus.documents.len(),
        corpus.dataset.len(),
        corpus.training.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = args.config.resolve()?;
    if let Some(p) = args.train_dataset.clone() {
        cfg.train.dataset = p;
    }
    set!(cfg.train, args, hidden_dim, n_layers, n_heads, model_seed, steps, batch_size, learning_rate);
    let out = train_model(&cfg)?;
    save_checkpoint(&cfg.model, &out.model, Some(&out.tokenizer))?;
    println!(
        "held-out masked cross-entropy {:.4} -> {:.4}; checkpoint {}",
        out.report.initial_holdout_loss,
        out.report.final_holdout_loss,
        cfg.model.display()
    );
    if let Some(path) = args.report {
        std::fs::write(&path, serde_json::to_vec_pretty(&out.report)?)?;
    }
    Ok(())
}

fn index(args: IndexArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve()?;
    cfg.embedder.validate()?;
    let embedder = cfg.embedder.build()?;
    let docs = read_corpus(&cfg.corpus)?;
    let index = RetrievalIndex::build(&docs, cfg.chunk_size, embedder.as_ref())?;
    index.save(&args.out)?;
    println!("indexed {} chunks from {} documents into {}", index.len(), docs.len(), args.out.display());
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let mut cfg = args.config.resolve()?;
    cfg.seed = args.seed;
    let dir = cfg.output_dir.clone();
    let output = run_experiment(cfg)?;
    print_report(&output.report);
    println!("outputs in {}", dir.display());
    let failed = output.n_failed();
    if failed > 0 {
        eprintln!("{failed} of {} answers failed; see the error field in answers.jsonl", output.records.len());
    }
    Ok(failed == 0)
}

fn bench(args: BenchArgs) -> anyhow::Result<()> {
    let mut cfg = args.config.resolve()?;
    cfg.seed = args.seed;
    if args.timed == 0 {
        bail!("--timed must be at least 1");
    }
    let experiment = Experiment::prepare(cfg)?;
    let report = measure_efficiency(&experiment, args.warmup, args.timed)?;
    println!("{:<15} {:>10} {:>10} {:>10}", "strategy", "avg(s)", "tok/s", "overhead");
    for r in &report.rows {
        let overhead = r.overhead_pct.map_or("-".to_string(), |p| format!("{p:+.2}%"));
        println!("{:<15} {:>10.5} {:>10.1} {:>10}", r.strategy, r.avg_time_s, r.tokens_per_second, overhead);
    }
    if let Some(path) = args.out {
        std::fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}

fn score(args: ScoreArgs) -> anyhow::Result<()> {
    let records = read_answer_records(&args.answers)?;
    let (rescored, report) = score_records(&records, args.encoder_dim)?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_answer_records(&args.out_dir.join("answers.jsonl"), &rescored)?;
    write_summary_csv(&args.out_dir.join("summary.csv"), &report)?;
    print_report(&report);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Index(a) => index(a).map(|_| true),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a).map(|_| true),
        Command::Score(a) => score(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
