//! Query-relevance scoring for masked positions.
//!
//! The query is encoded once by a forward pass over the query tokens alone;
//! its pooled hidden state is compared to the hidden state of each masked
//! position with cosine similarity, squashed through a sigmoid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DenoisingModel, ForwardOutput};
use crate::scheduler::{top_k, Rank, UnmaskDecision};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryVector {
    values: Vec<f64>,
    norm: f64,
}

impl QueryVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateEmbedding("query vector is not finite".into()));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(Error::DegenerateEmbedding("query vector has zero norm".into()));
        }
        Ok(QueryVector { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean of the last-layer hidden rows of a forward pass over `query`.
pub fn encode_query<M: DenoisingModel + ?Sized>(model: &M, query: &[TokenId]) -> Result<QueryVector> {
    if query.is_empty() {
        return Err(Error::Input("query is empty".into()));
    }
    let out = model.forward(query)?;
    let mut mean = vec![0.0; out.hidden.ncols()];
    for row in out.hidden.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = query.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    QueryVector::new(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceEntry {
    pub position: usize,
    pub similarity: f64,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelevanceScores {
    pub entries: Vec<RelevanceEntry>,
}

impl RelevanceScores {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Scores every masked position against `query`.
pub fn relevance_scores(
    output: &ForwardOutput,
    masked: &[usize],
    query: &QueryVector,
) -> Result<RelevanceScores> {
    let dim = output.hidden.ncols();
    if dim != query.dim() {
        return Err(Error::Shape {
            expected: format!("hidden dimension {}", query.dim()),
            actual: format!("hidden dimension {dim}"),
        });
    }
    let mut entries = Vec::with_capacity(masked.len());
    for &position in masked {
        if position >= output.len() {
            return Err(Error::Input(format!(
                "position {position} outside sequence of length {}",
                output.len()
            )));
        }
        let h = output.hidden_row(position);
        let norm = l2_norm(h);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateEmbedding(format!(
                "hidden state at position {position} has norm {norm}"
            )));
        }
        let dot: f64 = h.iter().zip(query.values()).map(|(x, y)| x * y).sum();
        let similarity = (dot / (norm * query.norm())).clamp(-1.0, 1.0);
        entries.push(RelevanceEntry {
            position,
            similarity,
            relevance: sigmoid(similarity),
        });
    }
    Ok(RelevanceScores { entries })
}

/// The `k` most relevant positions, ties towards the lowest position.
pub fn select_spread(scores: &RelevanceScores, k: usize) -> Result<UnmaskDecision> {
    let scored = scores
        .entries
        .iter()
        .map(|e| (e.position, e.relevance))
        .collect();
    top_k(scored, k, Rank::HighestFirst)
}
