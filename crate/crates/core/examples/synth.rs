//! Writes a small synthetic distractor corpus to a directory (default `synth-data`).

use std::path::PathBuf;

use spread_rag::harness::{generate_synthetic_corpus, SyntheticSpec};

fn main() -> spread_rag::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth-data".into()));
    let spec = SyntheticSpec { n_documents: 20, n_queries: 10, vocab_size: 80, ..SyntheticSpec::default() };
    let corpus = generate_synthetic_corpus(&spec)?;
    corpus.write(&dir)?;
    let q = &corpus.dataset[0];
    println!("{} documents, {} questions in {}", corpus.documents.len(), corpus.dataset.len(), dir.display());
    println!("example: {:?} -> {:?} (doc {:?})", q.question, q.gold_answer, q.gold_doc_ids);
    Ok(())
}
