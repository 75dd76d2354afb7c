//! Chunking, dense indexing, top-k lookup and prompt assembly.

mod embed;

use std::cmp::Ordering;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use embed::{hash_embed, Embedder, EmbedderConfig, EmbedderKind, HashEmbedder, RemoteEmbedder};

use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 2000;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    read_jsonl(path)
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::Input(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    #[serde(default)]
    pub embedding: Vec<f64>,
}

/// Fixed-width slicing by code point; the last chunk may be short.
pub fn chunk_document(doc_id: &str, text: &str, chunk_size: usize) -> Result<Vec<Chunk>> {
    if chunk_size == 0 {
        return Err(Error::Config("chunk_size must be at least 1".into()));
    }
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut count = 0;
    for (i, _) in text.char_indices() {
        if count == chunk_size {
            chunks.push(&text[start..i]);
            start = i;
            count = 0;
        }
        count += 1;
    }
    if count > 0 {
        chunks.push(&text[start..]);
    }
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(chunk_index, t)| Chunk {
            doc_id: doc_id.to_string(),
            chunk_index,
            text: t.to_string(),
            embedding: Vec::new(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    chunks: Vec<Chunk>,
    embedder_id: String,
    embedding_dim: usize,
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    for x in v {
        *x /= norm;
    }
    Some(())
}

impl RetrievalIndex {
    /// Chunks and embeds every document. The result does not depend on the
    /// order of `docs`.
    pub fn build(docs: &[Document], chunk_size: usize, embedder: &dyn Embedder) -> Result<Self> {
        let mut chunks = Vec::new();
        for d in docs {
            chunks.extend(chunk_document(&d.doc_id, &d.text, chunk_size)?);
        }
        chunks.sort_by(|a, b| (&a.doc_id, a.chunk_index).cmp(&(&b.doc_id, b.chunk_index)));
        if let Some(w) = chunks.windows(2).find(|w| w[0].doc_id == w[1].doc_id && w[0].chunk_index == w[1].chunk_index) {
            return Err(Error::Input(format!("duplicate doc_id {:?}", w[0].doc_id)));
        }
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let embeddings = embedder.embed(&texts)?;
        if embeddings.len() != chunks.len() {
            return Err(Error::Retrieval(format!(
                "embedder returned {} vectors for {} chunks",
                embeddings.len(),
                chunks.len()
            )));
        }
        let dim = embedder.dim();
        for (c, mut e) in chunks.iter_mut().zip(embeddings) {
            if e.len() != dim {
                return Err(Error::Shape {
                    expected: format!("embedding dimension {dim}"),
                    actual: format!("embedding dimension {}", e.len()),
                });
            }
            normalize(&mut e).ok_or_else(|| {
                Error::DegenerateEmbedding(format!("chunk {}#{} has a zero embedding", c.doc_id, c.chunk_index))
            })?;
            c.embedding = e;
        }
        Ok(RetrievalIndex {
            chunks,
            embedder_id: embedder.id(),
            embedding_dim: dim,
        })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    /// Ranks chunks by cosine similarity to `query`; ties by
    /// `(doc_id, chunk_index)`.
    pub fn search(&self, query: &[f64], top_k: usize) -> Result<Vec<RetrievedChunk>> {
        if self.chunks.is_empty() {
            return Err(Error::Retrieval("index is empty".into()));
        }
        if top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if query.len() != self.embedding_dim {
            return Err(Error::Shape {
                expected: format!("query dimension {}", self.embedding_dim),
                actual: format!("query dimension {}", query.len()),
            });
        }
        let mut q = query.to_vec();
        normalize(&mut q).ok_or_else(|| Error::DegenerateEmbedding("query embedding is zero".into()))?;
        let mut scored: Vec<(usize, f64)> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.embedding.iter().zip(&q).map(|(a, b)| a * b).sum()))
            .collect();
        // Chunks are stored in (doc_id, chunk_index) order, so the index is the tie-break.
        let cmp = |a: &(usize, f64), b: &(usize, f64)| -> Ordering { b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)) };
        let k = top_k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(i, score)| {
                let c = &self.chunks[i];
                RetrievedChunk {
                    doc_id: c.doc_id.clone(),
                    chunk_index: c.chunk_index,
                    score,
                    text: c.text.clone(),
                }
            })
            .collect())
    }

    pub fn retrieve(&self, embedder: &dyn Embedder, query: &str, top_k: usize) -> Result<Vec<RetrievedChunk>> {
        if embedder.id() != self.embedder_id {
            return Err(Error::Retrieval(format!(
                "index was built with {} but queried with {}",
                self.embedder_id,
                embedder.id()
            )));
        }
        let mut v = embedder.embed(&[query.to_string()])?;
        let q = v.pop().ok_or_else(|| Error::Retrieval("embedder returned no vector".into()))?;
        self.search(&q, top_k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let index: RetrievalIndex = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
        if index.chunks.iter().any(|c| c.embedding.len() != index.embedding_dim) {
            return Err(Error::Retrieval(format!(
                "{}: chunk embedding dimension differs from {}",
                path.display(),
                index.embedding_dim
            )));
        }
        Ok(index)
    }
}

pub const DEFAULT_TEMPLATE: &str = "Context:\n{context}\n\nQuestion: {query}\nAnswer:";
pub const CHUNK_SEPARATOR: &str = "\n---\n";

/// Renders `template`, replacing `{context}` with the chunks joined by
/// separator lines and `{query}` with the question.
pub fn assemble_prompt<S: AsRef<str>>(query: &str, chunks: &[S], template: &str) -> String {
    let context = chunks
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(CHUNK_SEPARATOR);
    template.replace("{context}", &context).replace("{query}", query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_sizes() {
        let text: String = "é".repeat(4500);
        let chunks = chunk_document("d", &text, 2000).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(|c| c.text.chars().count()).collect();
        assert_eq!(sizes, [2000, 2000, 500]);
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
        assert_eq!(chunk_document("d", &"x".repeat(2000), 2000).unwrap().len(), 1);
        assert!(chunk_document("d", "", 2000).unwrap().is_empty());
        assert!(chunk_document("d", "abc", 0).is_err());
    }

    fn docs() -> Vec<Document> {
        [
            ("a", "the eiffel tower was built in 1889"),
            ("b", "bananas grow in warm climates"),
            ("c", "rust is a systems programming language"),
        ]
        .iter()
        .map(|(id, t)| Document {
            doc_id: id.to_string(),
            text: t.to_string(),
        })
        .collect()
    }

    #[test]
    fn self_retrieval_and_single_chunk() {
        let e = HashEmbedder::new(256).unwrap();
        let index = RetrievalIndex::build(&docs(), 2000, &e).unwrap();
        let hits = index.retrieve(&e, "bananas grow in warm climates", 5).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].doc_id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-12);

        let one = RetrievalIndex::build(&docs()[..1], 2000, &e).unwrap();
        assert_eq!(one.retrieve(&e, "unrelated words", 5).unwrap()[0].doc_id, "a");
    }

    #[test]
    fn build_ignores_document_order() {
        let e = HashEmbedder::new(64).unwrap();
        let mut reversed = docs();
        reversed.reverse();
        assert_eq!(
            RetrievalIndex::build(&docs(), 7, &e).unwrap(),
            RetrievalIndex::build(&reversed, 7, &e).unwrap()
        );
    }

    #[test]
    fn empty_index_and_mismatched_embedder() {
        let e = HashEmbedder::new(64).unwrap();
        let empty = RetrievalIndex::build(&[], 10, &e).unwrap();
        assert!(matches!(empty.retrieve(&e, "x", 5), Err(Error::Retrieval(_))));
        let index = RetrievalIndex::build(&docs(), 10, &e).unwrap();
        let other = HashEmbedder::new(32).unwrap();
        assert!(index.retrieve(&other, "x", 5).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let e = HashEmbedder::new(64).unwrap();
        let index = RetrievalIndex::build(&docs(), 12, &e).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        index.save(&path).unwrap();
        assert_eq!(RetrievalIndex::load(&path).unwrap(), index);
    }

    #[test]
    fn prompt_rendering() {
        let empty: [&str; 0] = [];
        assert_eq!(
            assemble_prompt("why?", &empty, DEFAULT_TEMPLATE),
            "Context:\n\n\nQuestion: why?\nAnswer:"
        );
        let two = assemble_prompt("q", &["first", "second"], DEFAULT_TEMPLATE);
        assert_eq!(two, "Context:\nfirst\n---\nsecond\n\nQuestion: q\nAnswer:");
    }
}
