//! Chunks a small corpus, indexes it with the hashing embedder and assembles a prompt.

use spread_rag::retrieval::{assemble_prompt, Document, HashEmbedder, RetrievalIndex, DEFAULT_TEMPLATE};

fn main() -> spread_rag::Result<()> {
    let docs = vec![
        Document { doc_id: "a".into(), text: "the zorp likes mud. the zorp hates rain.".into() },
        Document { doc_id: "b".into(), text: "the blick eats sand. the blick fears salt.".into() },
        Document { doc_id: "c".into(), text: "the grel is kept near the vesk.".into() },
    ];
    let embedder = HashEmbedder::new(4096)?;
    let index = RetrievalIndex::build(&docs, 20, &embedder)?;
    println!("{} chunks", index.len());

    let query = "what does the zorp like?";
    let hits = index.retrieve(&embedder, query, 2)?;
    for h in &hits {
        println!("{}#{}  {:.3}  {:?}", h.doc_id, h.chunk_index, h.score, h.text);
    }
    let texts: Vec<&str> = hits.iter().map(|h| h.text.as_str()).collect();
    println!("\n{}", assemble_prompt(query, &texts, DEFAULT_TEMPLATE));
    Ok(())
}
