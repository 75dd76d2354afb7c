//! End-to-end experiment against a table-oracle model: corpus, dataset and
//! fixture are written to a scratch directory, then every strategy is run and scored.

use spread_rag::harness::{planted_fixture, run_experiment, write_dataset, ExperimentConfig, ModelKind, QARecord};
use spread_rag::retrieval::{write_corpus, Document, DEFAULT_TEMPLATE};
use spread_rag::scheduler::StrategyKind;
use spread_rag::tokenizer::pieces;

fn main() -> spread_rag::Result<()> {
    let dir = std::env::temp_dir().join("spread-oracle-experiment");
    std::fs::create_dir_all(&dir)?;
    let docs = vec![
        Document { doc_id: "a".into(), text: "the zorp likes mud.".into() },
        Document { doc_id: "b".into(), text: "the blick eats sand.".into() },
    ];
    let questions = ["what does zorp like?", "what does the zorp like?", "zorp likes what?"];
    let dataset: Vec<QARecord> = questions
        .iter()
        .enumerate()
        .map(|(i, q)| QARecord {
            id: format!("q{i}"),
            question: q.to_string(),
            gold_answer: "mud".into(),
            gold_doc_ids: vec!["a".into()],
        })
        .collect();
    write_corpus(&dir.join("corpus.jsonl"), &docs)?;
    write_dataset(&dir.join("dataset.jsonl"), &dataset)?;

    let mut words: Vec<String> = docs
        .iter()
        .map(|d| d.text.as_str())
        .chain(questions)
        .chain([DEFAULT_TEMPLATE])
        .flat_map(pieces)
        .collect();
    words.sort();
    words.dedup();
    let words: Vec<&str> = words.iter().map(String::as_str).collect();
    planted_fixture(&words, "mud", ["sand", "eats"], 256, 1)?.fixture.save(&dir.join("oracle.json"))?;

    let out = run_experiment(ExperimentConfig {
        corpus: dir.join("corpus.jsonl"),
        dataset: dir.join("dataset.jsonl"),
        model: dir.join("oracle.json"),
        model_kind: ModelKind::TableOracle,
        strategies: StrategyKind::ALL.to_vec(),
        diffusion_steps: 2,
        max_new_tokens: 2,
        temperature: 0.0,
        top_k: 2,
        output_dir: dir.join("run"),
        seed: 1,
        ..ExperimentConfig::default()
    })?;
    for s in &out.report.summaries {
        println!("{:>15}: precision {:.2}  f1 {:.2}", s.strategy, s.precision, s.f1);
    }
    println!("outputs in {}", dir.join("run").display());
    Ok(())
}
