//! Lookup-table model used as a test oracle.
//!
//! Rows are resolved from the most to the least specific key:
//! the full token sequence plus position, then the sequence tail plus the
//! position counted from the end, then (position, token at that position),
//! then the token alone, then a default row. Tests populate
//! only the keys they care about and let the rest fall through.

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;

use super::{DenoisingModel, ForwardOutput};
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Default)]
struct RowTable {
    exact: HashMap<(Vec<TokenId>, usize), Vec<f64>>,
    tail: HashMap<(Vec<TokenId>, usize), Vec<f64>>,
    tail_lens: BTreeSet<usize>,
    positional: HashMap<(usize, TokenId), Vec<f64>>,
    by_token: HashMap<TokenId, Vec<f64>>,
}

impl RowTable {
    fn lookup<'a>(
        &'a self,
        tokens: &[TokenId],
        position: usize,
        default: &'a [f64],
    ) -> &'a [f64] {
        let token = tokens[position];
        if !self.exact.is_empty() {
            if let Some(row) = self.exact.get(&(tokens.to_vec(), position)) {
                return row;
            }
        }
        let n = tokens.len();
        for &len in self.tail_lens.iter().rev() {
            if len > n || position < n - len {
                continue;
            }
            if let Some(row) = self.tail.get(&(tokens[n - len..].to_vec(), n - 1 - position)) {
                return row;
            }
        }
        if let Some(row) = self.positional.get(&(position, token)) {
            return row;
        }
        if let Some(row) = self.by_token.get(&token) {
            return row;
        }
        default
    }
}

#[derive(Debug, Clone)]
pub struct TableOracleModel {
    vocab_size: usize,
    hidden_dim: usize,
    max_seq_len: usize,
    mask_id: TokenId,
    logits: RowTable,
    hidden: RowTable,
    default_logits: Vec<f64>,
    default_hidden: Vec<f64>,
}

impl TableOracleModel {
    /// Creates an oracle whose fallback logits are uniform and whose
    /// fallback hidden state is the first basis vector.
    pub fn new(
        vocab_size: usize,
        hidden_dim: usize,
        max_seq_len: usize,
        mask_id: TokenId,
    ) -> Result<Self> {
        if vocab_size == 0 || hidden_dim == 0 || max_seq_len == 0 {
            return Err(Error::Config("oracle dimensions must be positive".into()));
        }
        if mask_id as usize >= vocab_size {
            return Err(Error::Config("mask id outside vocabulary".into()));
        }
        let mut default_hidden = vec![0.0; hidden_dim];
        default_hidden[0] = 1.0;
        Ok(Self {
            vocab_size,
            hidden_dim,
            max_seq_len,
            mask_id,
            logits: RowTable::default(),
            hidden: RowTable::default(),
            default_logits: vec![0.0; vocab_size],
            default_hidden,
        })
    }

    fn check_logits(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.vocab_size {
            return Err(Error::Shape {
                expected: format!("logit row of length {}", self.vocab_size),
                actual: format!("length {}", row.len()),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("oracle logit rows must be finite".into()));
        }
        Ok(())
    }

    fn check_hidden(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.hidden_dim {
            return Err(Error::Shape {
                expected: format!("hidden row of length {}", self.hidden_dim),
                actual: format!("length {}", row.len()),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("oracle hidden rows must be finite".into()));
        }
        Ok(())
    }

    pub fn set_default_logits(&mut self, row: Vec<f64>) -> Result<()> {
        self.check_logits(&row)?;
        self.default_logits = row;
        Ok(())
    }

    pub fn set_default_hidden(&mut self, row: Vec<f64>) -> Result<()> {
        self.check_hidden(&row)?;
        self.default_hidden = row;
        Ok(())
    }

    pub fn set_logits(&mut self, seq: &[TokenId], position: usize, row: Vec<f64>) -> Result<()> {
        self.check_logits(&row)?;
        self.logits.exact.insert((seq.to_vec(), position), row);
        Ok(())
    }

    pub fn set_hidden(&mut self, seq: &[TokenId], position: usize, row: Vec<f64>) -> Result<()> {
        self.check_hidden(&row)?;
        self.hidden.exact.insert((seq.to_vec(), position), row);
        Ok(())
    }

    /// Logits for the slot `from_end` positions before the last one, in any
    /// sequence ending with `tail`. `from_end` must index into the tail.
    pub fn set_tail_logits(&mut self, tail: &[TokenId], from_end: usize, row: Vec<f64>) -> Result<()> {
        self.check_logits(&row)?;
        check_tail(tail, from_end)?;
        self.logits.tail_lens.insert(tail.len());
        self.logits.tail.insert((tail.to_vec(), from_end), row);
        Ok(())
    }

    pub fn set_tail_hidden(&mut self, tail: &[TokenId], from_end: usize, row: Vec<f64>) -> Result<()> {
        self.check_hidden(&row)?;
        check_tail(tail, from_end)?;
        self.hidden.tail_lens.insert(tail.len());
        self.hidden.tail.insert((tail.to_vec(), from_end), row);
        Ok(())
    }

    /// Logits used whenever `position` holds `token`, in any sequence.
    pub fn set_position_logits(
        &mut self,
        position: usize,
        token: TokenId,
        row: Vec<f64>,
    ) -> Result<()> {
        self.check_logits(&row)?;
        self.logits.positional.insert((position, token), row);
        Ok(())
    }

    pub fn set_position_hidden(
        &mut self,
        position: usize,
        token: TokenId,
        row: Vec<f64>,
    ) -> Result<()> {
        self.check_hidden(&row)?;
        self.hidden.positional.insert((position, token), row);
        Ok(())
    }

    pub fn set_token_logits(&mut self, token: TokenId, row: Vec<f64>) -> Result<()> {
        self.check_logits(&row)?;
        self.logits.by_token.insert(token, row);
        Ok(())
    }

    /// Position-free hidden state for every occurrence of `token`.
    pub fn set_token_hidden(&mut self, token: TokenId, row: Vec<f64>) -> Result<()> {
        self.check_hidden(&row)?;
        self.hidden.by_token.insert(token, row);
        Ok(())
    }
}

fn check_tail(tail: &[TokenId], from_end: usize) -> Result<()> {
    if from_end >= tail.len() {
        return Err(Error::Input(format!(
            "tail offset {from_end} outside a tail of length {}",
            tail.len()
        )));
    }
    Ok(())
}

impl DenoisingModel for TableOracleModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn max_seq_len(&self) -> usize {
        self.max_seq_len
    }

    fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    fn forward(&self, tokens: &[TokenId]) -> Result<ForwardOutput> {
        self.check_input(tokens)?;
        let n = tokens.len();
        let mut logits = Array2::zeros((n, self.vocab_size));
        let mut hidden = Array2::zeros((n, self.hidden_dim));
        for i in 0..n {
            let l = self.logits.lookup(tokens, i, &self.default_logits);
            logits.row_mut(i).as_slice_mut().unwrap().copy_from_slice(l);
            let h = self.hidden.lookup(tokens, i, &self.default_hidden);
            hidden.row_mut(i).as_slice_mut().unwrap().copy_from_slice(h);
        }
        ForwardOutput::new(logits, hidden)
    }
}
