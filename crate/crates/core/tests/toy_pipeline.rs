use spread_rag::harness::{
    generate_synthetic_corpus, measure_efficiency, run_experiment, train_model, Experiment,
    ExperimentConfig, SyntheticSpec,
};
use spread_rag::model::save_checkpoint;
use spread_rag::scheduler::StrategyKind;

#[test]
fn synth_train_checkpoint_run_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { n_documents: 12, n_queries: 4, vocab_size: 80, ..SyntheticSpec::default() };
    generate_synthetic_corpus(&spec).unwrap().write(dir.path()).unwrap();
    let mut cfg = ExperimentConfig {
        corpus: dir.path().join("corpus.jsonl"),
        dataset: dir.path().join("dataset.jsonl"),
        model: dir.path().join("model.ckpt"),
        diffusion_steps: 4,
        max_new_tokens: 8,
        top_k: 1,
        prompt_width: Some(40),
        output_dir: dir.path().join("out"),
        seed: 5,
        ..ExperimentConfig::default()
    };
    cfg.train.dataset = dir.path().join("train.jsonl");
    cfg.train.hidden_dim = 16;
    cfg.train.n_layers = 1;
    cfg.train.n_heads = 2;
    cfg.train.steps = 30;
    cfg.train.warmup_steps = 5;

    let trained = train_model(&cfg).unwrap();
    assert!(trained.report.final_holdout_loss < trained.report.initial_holdout_loss);
    assert_eq!(trained.model.spec().max_seq_len, 48);
    save_checkpoint(&cfg.model, &trained.model, Some(&trained.tokenizer)).unwrap();

    let out = run_experiment(cfg.clone()).unwrap();
    assert_eq!(out.n_failed(), 0);
    assert_eq!(out.records.len(), 4 * StrategyKind::ALL.len());
    for t in &out.traces {
        let extra = usize::from(t.trace.strategy == "spread");
        assert_eq!(t.trace.forward_calls, 4 + extra);
    }

    let exp = Experiment::prepare(cfg).unwrap();
    let bench = measure_efficiency(&exp, 1, 3).unwrap();
    for row in &bench.rows {
        assert_eq!(row.samples.len(), 3);
        assert!((row.tokens_per_second * row.avg_time_s - 8.0).abs() < 8.0 * 0.005);
    }
    assert_eq!(bench.get(StrategyKind::LowConfidence).unwrap().overhead_pct, Some(0.0));
}
