//! Denoising-model interface and its backends.
//!
//! A [`DenoisingModel`] maps a token canvas to per-position logits and
//! last-layer hidden states. Two backends ship with the crate: a lookup-table
//! oracle for exact tests and a small bidirectional transformer that can be
//! trained from scratch.

mod checkpoint;
mod instrument;
mod oracle;
mod train;
mod transformer;

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use instrument::CountingModel;
pub use oracle::TableOracleModel;
pub use train::{
    masked_cross_entropy, train_toy_model, TrainConfig, TrainReport, TrainingSequence,
};
pub use transformer::ToyTransformer;

use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// Architecture and seed of the desk-scale transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_seq_len: usize,
    pub mask_id: TokenId,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.hidden_dim == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.max_seq_len == 0
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !self.hidden_dim.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by n_heads {}",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.mask_id as usize >= self.vocab_size {
            return Err(Error::Config(format!(
                "mask_id {} must be below vocab_size {}",
                self.mask_id, self.vocab_size
            )));
        }
        Ok(())
    }
}

/// Logits and last-layer hidden states for every input position.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Array2<f64>,
    pub hidden: Array2<f64>,
}

impl ForwardOutput {
    pub fn new(logits: Array2<f64>, hidden: Array2<f64>) -> Result<Self> {
        if logits.nrows() != hidden.nrows() {
            return Err(Error::Shape {
                expected: format!("{} hidden rows", logits.nrows()),
                actual: format!("{} hidden rows", hidden.nrows()),
            });
        }
        Ok(Self { logits, hidden })
    }

    pub fn len(&self) -> usize {
        self.logits.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.nrows() == 0
    }

    pub fn logit_row(&self, position: usize) -> &[f64] {
        self.logits
            .row(position)
            .to_slice()
            .expect("logits are stored in standard layout")
    }

    pub fn hidden_row(&self, position: usize) -> &[f64] {
        self.hidden
            .row(position)
            .to_slice()
            .expect("hidden states are stored in standard layout")
    }
}

/// A model that can be queried by the denoising loop.
///
/// Implementations must be pure: the same input always yields the same
/// output, and a loaded model may be shared across worker threads.
pub trait DenoisingModel: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn max_seq_len(&self) -> usize;
    fn mask_id(&self) -> TokenId;

    /// Runs one forward pass over `tokens`.
    fn forward(&self, tokens: &[TokenId]) -> Result<ForwardOutput>;

    /// Checks the length and vocabulary preconditions shared by every backend.
    fn check_input(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.len() > self.max_seq_len() {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: self.max_seq_len(),
            });
        }
        let vocab_size = self.vocab_size();
        if let Some((position, &id)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &id)| id as usize >= vocab_size)
        {
            return Err(Error::TokenOutOfVocab {
                id,
                position,
                vocab_size,
            });
        }
        Ok(())
    }
}

impl<M: DenoisingModel + ?Sized> DenoisingModel for Arc<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn hidden_dim(&self) -> usize {
        (**self).hidden_dim()
    }
    fn max_seq_len(&self) -> usize {
        (**self).max_seq_len()
    }
    fn mask_id(&self) -> TokenId {
        (**self).mask_id()
    }
    fn forward(&self, tokens: &[TokenId]) -> Result<ForwardOutput> {
        (**self).forward(tokens)
    }
}

impl<M: DenoisingModel + ?Sized> DenoisingModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn hidden_dim(&self) -> usize {
        (**self).hidden_dim()
    }
    fn max_seq_len(&self) -> usize {
        (**self).max_seq_len()
    }
    fn mask_id(&self) -> TokenId {
        (**self).mask_id()
    }
    fn forward(&self, tokens: &[TokenId]) -> Result<ForwardOutput> {
        (**self).forward(tokens)
    }
}

/// The evolving canvas of one generation: a fixed prompt followed by
/// answer slots that start as MASK and are filled in place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<TokenId>,
    mask_id: TokenId,
    prompt_len: usize,
}

impl TokenSequence {
    /// Builds `prompt ++ [MASK] * max_new_tokens`.
    pub fn canvas(prompt: &[TokenId], max_new_tokens: usize, mask_id: TokenId) -> Result<Self> {
        if let Some(pos) = prompt.iter().position(|&t| t == mask_id) {
            return Err(Error::Input(format!(
                "prompt holds the mask token at position {pos}"
            )));
        }
        let mut tokens = Vec::with_capacity(prompt.len() + max_new_tokens);
        tokens.extend_from_slice(prompt);
        tokens.resize(prompt.len() + max_new_tokens, mask_id);
        Ok(Self {
            tokens,
            mask_id,
            prompt_len: prompt.len(),
        })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.tokens[..self.prompt_len]
    }

    pub fn answer(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }

    /// Masked positions in ascending order.
    pub fn masked_positions(&self) -> Vec<usize> {
        (self.prompt_len..self.tokens.len())
            .filter(|&i| self.tokens[i] == self.mask_id)
            .collect()
    }

    pub fn is_masked(&self, position: usize) -> bool {
        position >= self.prompt_len
            && position < self.tokens.len()
            && self.tokens[position] == self.mask_id
    }

    /// Writes a decoded token into a masked answer slot.
    pub fn commit(&mut self, position: usize, token: TokenId) -> Result<()> {
        if !self.is_masked(position) {
            return Err(Error::ContractViolation(format!(
                "position {position} is not a masked answer slot"
            )));
        }
        if token == self.mask_id {
            return Err(Error::ContractViolation(format!(
                "refusing to commit the mask token at position {position}"
            )));
        }
        self.tokens[position] = token;
        Ok(())
    }
}
