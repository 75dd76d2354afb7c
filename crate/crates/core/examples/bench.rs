//! Trains a small model on a synthetic corpus, then times SPREAD against
//! low-confidence with interleaved runs.

use spread_rag::harness::{
    generate_synthetic_corpus, measure_efficiency, train_model, Experiment, ExperimentConfig, SyntheticSpec,
};
use spread_rag::model::save_checkpoint;
use spread_rag::scheduler::StrategyKind;

fn main() -> spread_rag::Result<()> {
    let dir = std::env::temp_dir().join("spread-bench");
    let spec = SyntheticSpec { n_documents: 30, n_queries: 10, vocab_size: 120, ..SyntheticSpec::default() };
    generate_synthetic_corpus(&spec)?.write(&dir)?;
    let mut cfg = ExperimentConfig {
        corpus: dir.join("corpus.jsonl"),
        dataset: dir.join("dataset.jsonl"),
        model: dir.join("model.ckpt"),
        strategies: vec![StrategyKind::LowConfidence, StrategyKind::Spread],
        diffusion_steps: 8,
        max_new_tokens: 16,
        top_k: 1,
        prompt_width: Some(48),
        seed: 3,
        ..ExperimentConfig::default()
    };
    cfg.train.dataset = dir.join("train.jsonl");
    cfg.train.hidden_dim = 32;
    cfg.train.steps = 50;
    let trained = train_model(&cfg)?;
    save_checkpoint(&cfg.model, &trained.model, Some(&trained.tokenizer))?;

    let report = measure_efficiency(&Experiment::prepare(cfg)?, 2, 20)?;
    for row in &report.rows {
        let overhead = row.overhead_pct.map_or(String::new(), |p| format!("  {p:+.1}%"));
        println!("{:>15}: {:.5}s  {:.0} tokens/s{overhead}", row.strategy, row.avg_time_s, row.tokens_per_second);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
