//! Experiment configuration, model training from a dataset, end-to-end runs,
//! efficiency timing and re-scoring.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixture::OracleFixture;
use super::pipeline::{answer_target, training_sequence, PromptBuilder};
use super::{read_dataset, QARecord};
use crate::error::{Error, Result};
use crate::metrics::{
    write_answer_records, write_summary_csv, AnswerMetrics, AnswerRecord, HashSentenceEncoder,
    MetricReport,
};
use crate::model::{
    load_checkpoint, train_toy_model, DenoisingModel, ModelSpec, ToyTransformer, TrainConfig,
    TrainReport,
};
use crate::retrieval::{
    read_corpus, write_jsonl, Embedder, EmbedderConfig, RetrievalIndex, DEFAULT_CHUNK_SIZE,
    DEFAULT_TEMPLATE, DEFAULT_TOP_K,
};
use crate::scheduler::{generate, GenConfig, GenerationTrace, StrategyKind};
use crate::tokenizer::{Tokenizer, MASK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Binary checkpoint of the toy transformer, vocabulary included.
    Checkpoint,
    /// JSON [`OracleFixture`].
    TableOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// QA records whose gold answers become training targets.
    pub dataset: PathBuf,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub model_seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub mask_rate_min: f64,
    pub mask_rate_max: f64,
    pub holdout_fraction: f64,
    pub grad_clip: f64,
    pub log_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            dataset: PathBuf::from("train.jsonl"),
            hidden_dim: 64,
            n_layers: 2,
            n_heads: 4,
            model_seed: 11,
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            warmup_steps: t.warmup_steps,
            mask_rate_min: t.mask_rate_range.0,
            mask_rate_max: t.mask_rate_range.1,
            holdout_fraction: t.holdout_fraction,
            grad_clip: t.grad_clip,
            log_every: t.log_every,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            mask_rate_range: (self.mask_rate_min, self.mask_rate_max),
            holdout_fraction: self.holdout_fraction,
            warmup_steps: self.warmup_steps,
            grad_clip: self.grad_clip,
            log_every: self.log_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub model_kind: ModelKind,
    /// Prebuilt index; built from `corpus` when absent.
    pub index: Option<PathBuf>,
    pub strategies: Vec<StrategyKind>,
    pub diffusion_steps: usize,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub top_k: usize,
    pub chunk_size: usize,
    pub embedder: EmbedderConfig,
    pub template: String,
    /// Fixed prompt width in tokens; prompts are left-padded or left-truncated.
    pub prompt_width: Option<usize>,
    /// Dimension of the hashing sentence encoder used for RSD.
    pub encoder_dim: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub train: TrainSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let g = GenConfig::default();
        ExperimentConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            dataset: PathBuf::from("dataset.jsonl"),
            model: PathBuf::from("model.ckpt"),
            model_kind: ModelKind::Checkpoint,
            index: None,
            strategies: StrategyKind::ALL.to_vec(),
            diffusion_steps: g.diffusion_steps,
            max_new_tokens: g.max_new_tokens,
            temperature: g.temperature,
            top_k: DEFAULT_TOP_K,
            chunk_size: DEFAULT_CHUNK_SIZE,
            embedder: EmbedderConfig::default(),
            template: DEFAULT_TEMPLATE.to_string(),
            prompt_width: None,
            encoder_dim: HashSentenceEncoder::default().dim,
            output_dir: PathBuf::from("runs"),
            seed: 0,
            workers: 0,
            train: TrainSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        self.gen_config(self.strategies[0], 0).validate()?;
        if self.top_k == 0 || self.chunk_size == 0 {
            return Err(Error::Config("top_k and chunk_size must be positive".into()));
        }
        if !self.template.contains("{query}") {
            return Err(Error::Config("template must contain {query}".into()));
        }
        if self.encoder_dim < 8 {
            return Err(Error::Config("encoder_dim must be at least 8".into()));
        }
        self.embedder.validate()
    }

    pub fn gen_config(&self, strategy: StrategyKind, seed: u64) -> GenConfig {
        GenConfig {
            diffusion_steps: self.diffusion_steps,
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            strategy,
            seed,
        }
    }
}

/// Per-query generation seed: FNV-1a over the run seed and the record id.
pub fn query_seed(run_seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in run_seed.to_le_bytes().iter().chain(id.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn load_index(config: &ExperimentConfig, embedder: &dyn Embedder) -> Result<RetrievalIndex> {
    let index = match &config.index {
        Some(path) => RetrievalIndex::load(path)?,
        None => RetrievalIndex::build(&read_corpus(&config.corpus)?, config.chunk_size, embedder)?,
    };
    if index.embedder_id() != embedder.id() {
        return Err(Error::Config(format!(
            "index was built with {} but the configured embedder is {}",
            index.embedder_id(),
            embedder.id()
        )));
    }
    Ok(index)
}

pub struct TrainOutcome {
    pub model: ToyTransformer,
    pub tokenizer: Tokenizer,
    pub report: TrainReport,
}

/// Fits a tokenizer and trains the toy transformer to answer
/// `config.train.dataset` from retrieved context, using the same prompt
/// construction as [`Experiment::run`].
pub fn train_model(config: &ExperimentConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let docs = read_corpus(&config.corpus)?;
    let records = read_dataset(&config.train.dataset)?;
    let tokenizer = Tokenizer::fit(
        docs.iter()
            .map(|d| d.text.as_str())
            .chain(records.iter().flat_map(|r| [r.question.as_str(), r.gold_answer.as_str()]))
            .chain([config.template.as_str()]),
    );
    let embedder = config.embedder.build()?;
    let index = load_index(config, embedder.as_ref())?;
    let builder = PromptBuilder {
        tokenizer: &tokenizer,
        index: &index,
        embedder: embedder.as_ref(),
        template: &config.template,
        top_k: config.top_k,
        prompt_width: config.prompt_width,
    };
    let mut sequences = Vec::with_capacity(records.len());
    for r in &records {
        let prompt = builder.build(&r.question)?;
        let target = answer_target(&tokenizer, &r.gold_answer, config.max_new_tokens);
        sequences.push(training_sequence(&prompt, target));
    }
    let longest = sequences.iter().map(|s| s.tokens.len()).max().unwrap_or(0);
    let spec = ModelSpec {
        vocab_size: tokenizer.vocab_size(),
        hidden_dim: config.train.hidden_dim,
        n_layers: config.train.n_layers,
        n_heads: config.train.n_heads,
        max_seq_len: longest,
        mask_id: MASK,
        seed: config.train.model_seed,
    };
    let (model, report) = train_toy_model(&sequences, spec, &config.train.train_config())?;
    Ok(TrainOutcome { model, tokenizer, report })
}

/// Per-answer trace, as written to `traces.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub seed: u64,
    #[serde(flatten)]
    pub trace: GenerationTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Strategy-major, then dataset order.
    pub records: Vec<AnswerRecord>,
    pub traces: Vec<TraceRecord>,
    pub report: MetricReport,
}

impl ExperimentOutput {
    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

/// A validated configuration with every input loaded.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: Box<dyn DenoisingModel>,
    pub tokenizer: Tokenizer,
    pub embedder: Box<dyn Embedder>,
    pub index: RetrievalIndex,
    pub dataset: Vec<QARecord>,
}

impl Experiment {
    /// Loads and cross-checks all inputs. Errors here are fatal and occur
    /// before any generation.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (model, tokenizer): (Box<dyn DenoisingModel>, Tokenizer) = match config.model_kind {
            ModelKind::Checkpoint => {
                let ckpt = load_checkpoint(&config.model)?;
                let tok = ckpt.tokenizer.ok_or_else(|| {
                    Error::Config(format!("checkpoint {} has no vocabulary", config.model.display()))
                })?;
                (Box::new(ckpt.model), tok)
            }
            ModelKind::TableOracle => {
                let (m, tok) = OracleFixture::load(&config.model)?.build()?;
                (Box::new(m), tok)
            }
        };
        if model.vocab_size() != tokenizer.vocab_size() {
            return Err(Error::Config(format!(
                "model vocabulary ({}) and tokenizer ({}) disagree",
                model.vocab_size(),
                tokenizer.vocab_size()
            )));
        }
        if let Some(w) = config.prompt_width {
            if w + config.max_new_tokens > model.max_seq_len() {
                return Err(Error::Config(format!(
                    "prompt_width {w} + max_new_tokens {} exceeds the model's max_seq_len {}",
                    config.max_new_tokens,
                    model.max_seq_len()
                )));
            }
        }
        let embedder = config.embedder.build()?;
        let index = load_index(&config, embedder.as_ref())?;
        let dataset = read_dataset(&config.dataset)?;
        Ok(Experiment { config, model, tokenizer, embedder, index, dataset })
    }

    pub fn builder(&self) -> PromptBuilder<'_> {
        PromptBuilder {
            tokenizer: &self.tokenizer,
            index: &self.index,
            embedder: self.embedder.as_ref(),
            template: &self.config.template,
            top_k: self.config.top_k,
            prompt_width: self.config.prompt_width,
        }
    }

    fn answer_query(&self, q: &QARecord, encoder: &HashSentenceEncoder) -> Vec<(AnswerRecord, Option<TraceRecord>)> {
        let seed = query_seed(self.config.seed, &q.id);
        let max_new_tokens = self.config.max_new_tokens;
        let blank = |strategy: StrategyKind| AnswerRecord {
            strategy: strategy.to_string(),
            id: q.id.clone(),
            question: q.question.clone(),
            gold_answer: q.gold_answer.clone(),
            answer: String::new(),
            context: String::new(),
            retrieved: Vec::new(),
            max_new_tokens,
            error: None,
            metrics: None,
        };
        let prompt = match self.builder().build(&q.question) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("query {}: {e}", q.id);
                return self
                    .config
                    .strategies
                    .iter()
                    .map(|&s| (AnswerRecord { error: Some(e.to_string()), ..blank(s) }, None))
                    .collect();
            }
        };
        let retrieved: Vec<String> = prompt
            .retrieved
            .iter()
            .map(|c| format!("{}#{}", c.doc_id, c.chunk_index))
            .collect();
        self.config
            .strategies
            .iter()
            .map(|&strategy| {
                let mut record = AnswerRecord {
                    context: prompt.context.clone(),
                    retrieved: retrieved.clone(),
                    ..blank(strategy)
                };
                let cfg = self.config.gen_config(strategy, seed);
                let result = generate(self.model.as_ref(), &prompt.tokens, Some(&prompt.query_tokens), &cfg)
                    .and_then(|g| {
                        let answer = self.tokenizer.decode(g.answer())?;
                        let metrics = AnswerMetrics::compute(
                            &answer,
                            &q.gold_answer,
                            &prompt.context,
                            encoder,
                            g.trace.duration_seconds,
                            max_new_tokens,
                        )?;
                        Ok((answer, metrics, g.trace))
                    });
                match result {
                    Ok((answer, metrics, trace)) => {
                        record.answer = answer;
                        record.metrics = Some(metrics);
                        (record, Some(TraceRecord { id: q.id.clone(), seed, trace }))
                    }
                    Err(e) => {
                        log::warn!("query {} ({strategy}): {e}", q.id);
                        record.error = Some(e.to_string());
                        (record, None)
                    }
                }
            })
            .collect()
    }

    /// Retrieves, generates and scores every query under every strategy.
    /// Queries run on a worker pool; output order is independent of it.
    pub fn run(&self) -> Result<ExperimentOutput> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        let encoder = HashSentenceEncoder { dim: self.config.encoder_dim };
        let per_query: Vec<Vec<(AnswerRecord, Option<TraceRecord>)>> =
            pool.install(|| self.dataset.par_iter().map(|q| self.answer_query(q, &encoder)).collect());
        let n_strategies = self.config.strategies.len();
        let mut records = Vec::with_capacity(per_query.len() * n_strategies);
        let mut traces = Vec::new();
        for s in 0..n_strategies {
            for answers in &per_query {
                let (record, trace) = &answers[s];
                records.push(record.clone());
                traces.extend(trace.clone());
            }
        }
        let report = MetricReport::from_records(&records);
        Ok(ExperimentOutput { records, traces, report })
    }
}

pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACES_FILE: &str = "traces.jsonl";

pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_answer_records(&dir.join(ANSWERS_FILE), &output.records)?;
    write_summary_csv(&dir.join(SUMMARY_FILE), &output.report)?;
    write_jsonl(&dir.join(TRACES_FILE), &output.traces)
}

/// Prepares, runs and writes answers, summary CSV and traces to
/// `config.output_dir`.
pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentOutput> {
    let experiment = Experiment::prepare(config)?;
    let output = experiment.run()?;
    write_outputs(&experiment.config.output_dir, &output)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub strategy: String,
    /// Denoising-loop wall time of each timed run, in seconds.
    pub samples: Vec<f64>,
    pub avg_time_s: f64,
    pub tokens_per_second: f64,
    /// Signed percentage relative to low-confidence; absent when it was not timed.
    pub overhead_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub max_new_tokens: usize,
    pub rows: Vec<EfficiencyRow>,
    pub warnings: Vec<String>,
}

impl EfficiencyReport {
    pub fn get(&self, strategy: StrategyKind) -> Option<&EfficiencyRow> {
        self.rows.iter().find(|r| r.strategy == strategy.as_str())
    }
}

/// Times full-answer generation per strategy. Runs are serialized and
/// strategies interleaved, cycling through the dataset's questions.
pub fn measure_efficiency(experiment: &Experiment, n_warmup: usize, n_timed: usize) -> Result<EfficiencyReport> {
    if n_timed == 0 {
        return Err(Error::Config("n_timed must be at least 1".into()));
    }
    if experiment.dataset.is_empty() {
        return Err(Error::Input("dataset is empty".into()));
    }
    let config = &experiment.config;
    let builder = experiment.builder();
    let mut prompts = Vec::new();
    for q in experiment.dataset.iter().take(n_warmup + n_timed) {
        prompts.push((query_seed(config.seed, &q.id), builder.build(&q.question)?));
    }
    let mut samples = vec![Vec::with_capacity(n_timed); config.strategies.len()];
    for run in 0..n_warmup + n_timed {
        let (seed, prompt) = &prompts[run % prompts.len()];
        for (s, &strategy) in config.strategies.iter().enumerate() {
            let cfg = config.gen_config(strategy, *seed);
            let g = generate(experiment.model.as_ref(), &prompt.tokens, Some(&prompt.query_tokens), &cfg)?;
            if run >= n_warmup {
                samples[s].push(g.trace.duration_seconds);
            }
        }
    }
    let mut warnings = Vec::new();
    let mut rows: Vec<EfficiencyRow> = config
        .strategies
        .iter()
        .zip(samples)
        .map(|(strategy, samples)| {
            let avg = samples.iter().sum::<f64>() / samples.len() as f64;
            if avg < 1e-3 {
                let w = format!("{strategy}: mean run of {avg:.2e}s is near timer resolution");
                log::warn!("{w}");
                warnings.push(w);
            }
            EfficiencyRow {
                strategy: strategy.to_string(),
                samples,
                avg_time_s: avg,
                tokens_per_second: if avg > 0.0 { config.max_new_tokens as f64 / avg } else { 0.0 },
                overhead_pct: None,
            }
        })
        .collect();
    let baseline = rows
        .iter()
        .find(|r| r.strategy == StrategyKind::LowConfidence.as_str())
        .map(|r| r.avg_time_s);
    if let Some(base) = baseline.filter(|b| *b > 0.0) {
        for r in &mut rows {
            r.overhead_pct = Some((r.avg_time_s - base) / base * 100.0);
        }
    }
    Ok(EfficiencyReport { max_new_tokens: config.max_new_tokens, rows, warnings })
}

/// Recomputes every metric of previously generated answers, keeping the
/// recorded generation times. Failed records stay failed.
pub fn score_records(records: &[AnswerRecord], encoder_dim: usize) -> Result<(Vec<AnswerRecord>, MetricReport)> {
    let encoder = HashSentenceEncoder { dim: encoder_dim };
    let rescored = records
        .iter()
        .map(|r| {
            if r.error.is_some() {
                return Ok(r.clone());
            }
            let time = r.metrics.as_ref().map_or(0.0, |m| m.gen_time_seconds);
            let metrics = AnswerMetrics::compute(&r.answer, &r.gold_answer, &r.context, &encoder, time, r.max_new_tokens)?;
            Ok(AnswerRecord { metrics: Some(metrics), ..r.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MetricReport::from_records(&rescored);
    Ok((rescored, report))
}
