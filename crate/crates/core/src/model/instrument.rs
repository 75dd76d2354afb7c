use std::sync::atomic::{AtomicUsize, Ordering};

use super::{DenoisingModel, ForwardOutput};
use crate::error::Result;
use crate::tokenizer::TokenId;

/// Wraps a model and counts forward invocations.
#[derive(Debug)]
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: DenoisingModel> DenoisingModel for CountingModel<M> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }
    fn hidden_dim(&self) -> usize {
        self.inner.hidden_dim()
    }
    fn max_seq_len(&self) -> usize {
        self.inner.max_seq_len()
    }
    fn mask_id(&self) -> TokenId {
        self.inner.mask_id()
    }
    fn forward(&self, tokens: &[TokenId]) -> Result<ForwardOutput> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.forward(tokens)
    }
}
