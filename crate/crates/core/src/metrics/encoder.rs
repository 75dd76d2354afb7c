use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::retrieval::hash_embed;

/// Maps a sentence to a fixed-dimension vector.
pub trait SentenceEncoder: Send + Sync {
    fn id(&self) -> String;
    fn embed(&self, sentence: &str) -> Result<Vec<f64>>;
}

/// Fixed lookup table keyed by the exact sentence text.
#[derive(Debug, Clone, Default)]
pub struct TableEncoder {
    table: HashMap<String, Vec<f64>>,
}

impl TableEncoder {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        TableEncoder {
            table: entries.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

impl SentenceEncoder for TableEncoder {
    fn id(&self) -> String {
        "table".into()
    }

    fn embed(&self, sentence: &str) -> Result<Vec<f64>> {
        self.table
            .get(sentence)
            .cloned()
            .ok_or_else(|| Error::Input(format!("no table embedding for {sentence:?}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HashSentenceEncoder {
    pub dim: usize,
}

impl Default for HashSentenceEncoder {
    fn default() -> Self {
        HashSentenceEncoder { dim: 4096 }
    }
}

impl SentenceEncoder for HashSentenceEncoder {
    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn embed(&self, sentence: &str) -> Result<Vec<f64>> {
        hash_embed(sentence, self.dim)
    }
}
