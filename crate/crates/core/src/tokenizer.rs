//! Word-level tokenizer.
//!
//! Text is lowercased, split on whitespace, and every non-alphanumeric
//! character becomes its own token. The vocabulary is the sorted set of
//! tokens seen in a training corpus, preceded by four reserved ids.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const MASK: TokenId = 2;
pub const EOS: TokenId = 3;

const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[MASK]", "[EOS]"];

/// Splits text into lowercase word and punctuation pieces.
pub fn pieces(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn attaches_left(piece: &str) -> bool {
    matches!(piece, "." | "," | "!" | "?" | ";" | ":" | ")" | "]" | "}" | "%")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for Tokenizer {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Tokenizer> for Vec<String> {
    fn from(tok: Tokenizer) -> Self {
        tok.tokens
    }
}

impl Tokenizer {
    /// Builds a vocabulary from every piece occurring in `texts`.
    pub fn fit<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = BTreeSet::new();
        for text in texts {
            set.extend(pieces(text));
        }
        Self::from_tokens(SPECIALS.iter().map(|s| s.to_string()).chain(set))
    }

    /// Rebuilds a tokenizer from a stored token list (specials first).
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let tokens: Vec<String> = tokens.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, piece: &str) -> Option<TokenId> {
        self.index.get(piece).copied()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        pieces(text)
            .iter()
            .map(|p| self.id(p).unwrap_or(UNK))
            .collect()
    }

    pub fn piece(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::TokenOutOfVocab {
                id,
                position: 0,
                vocab_size: self.tokens.len(),
            })
    }

    /// Renders ids back to text. Padding is dropped and punctuation is
    /// attached to the preceding word.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for (position, &id) in ids.iter().enumerate() {
            if id == PAD {
                continue;
            }
            let piece = self.tokens.get(id as usize).ok_or(Error::TokenOutOfVocab {
                id,
                position,
                vocab_size: self.tokens.len(),
            })?;
            if !out.is_empty() && !attaches_left(piece) {
                out.push(' ');
            }
            out.push_str(piece);
        }
        Ok(out)
    }
}
