//! End-to-end experiment plumbing: datasets, synthetic corpora, training,
//! experiment runs, efficiency timing and re-scoring.

mod experiment;
mod fixture;
mod pipeline;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use experiment::{
    measure_efficiency, query_seed, run_experiment, score_records, train_model, write_outputs,
    EfficiencyReport, EfficiencyRow, Experiment, ExperimentConfig, ExperimentOutput, ModelKind,
    TraceRecord, TrainOutcome, TrainSettings, ANSWERS_FILE, SUMMARY_FILE, TRACES_FILE,
};
pub use fixture::{planted_fixture, FixtureRow, OracleFixture, PlantedFixture, RowKey};
pub use pipeline::{answer_target, training_sequence, BuiltPrompt, PromptBuilder};
pub use synth::{generate_synthetic_corpus, AnswerKeyEntry, Fact, SyntheticCorpus, SyntheticSpec};

use crate::error::{Error, Result};
use crate::retrieval::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_doc_ids: Vec<String>,
}

pub fn read_dataset(path: &Path) -> Result<Vec<QARecord>> {
    let records: Vec<QARecord> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if r.question.trim().is_empty() || r.gold_answer.trim().is_empty() {
            return Err(Error::Input(format!("record {}: empty question or gold answer", r.id)));
        }
        if !seen.insert(&r.id) {
            return Err(Error::Input(format!("duplicate record id {}", r.id)));
        }
    }
    Ok(records)
}

pub fn write_dataset(path: &Path, records: &[QARecord]) -> Result<()> {
    write_jsonl(path, records)
}
