//! Question to token canvas: retrieval, prompt assembly, tokenisation and
//! fixed-width padding, shared by training and evaluation.

use crate::error::{Error, Result};
use crate::model::TrainingSequence;
use crate::retrieval::{assemble_prompt, Embedder, RetrievalIndex, RetrievedChunk};
use crate::tokenizer::{TokenId, Tokenizer, EOS, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPrompt {
    pub text: String,
    /// Retrieved chunk texts joined in rank order.
    pub context: String,
    pub retrieved: Vec<RetrievedChunk>,
    /// Prompt ids, left-padded (or left-truncated) to the configured width.
    pub tokens: Vec<TokenId>,
    pub query_tokens: Vec<TokenId>,
    pub truncated: bool,
}

pub struct PromptBuilder<'a> {
    pub tokenizer: &'a Tokenizer,
    pub index: &'a RetrievalIndex,
    pub embedder: &'a dyn Embedder,
    pub template: &'a str,
    pub top_k: usize,
    /// Fixed prompt width in tokens; `None` keeps the natural length.
    pub prompt_width: Option<usize>,
}

impl PromptBuilder<'_> {
    pub fn build(&self, question: &str) -> Result<BuiltPrompt> {
        let query_tokens = self.tokenizer.encode(question);
        if query_tokens.is_empty() {
            return Err(Error::Input(format!("question {question:?} has no tokens")));
        }
        let retrieved = self.index.retrieve(self.embedder, question, self.top_k)?;
        let texts: Vec<&str> = retrieved.iter().map(|c| c.text.as_str()).collect();
        let text = assemble_prompt(question, &texts, self.template);
        let context = texts.join("\n");
        let (tokens, truncated) = fit_width(self.tokenizer.encode(&text), self.prompt_width);
        Ok(BuiltPrompt {
            text,
            context,
            retrieved,
            tokens,
            query_tokens,
            truncated,
        })
    }
}

fn fit_width(mut tokens: Vec<TokenId>, width: Option<usize>) -> (Vec<TokenId>, bool) {
    let Some(width) = width else {
        return (tokens, false);
    };
    if tokens.len() > width {
        let cut = tokens.len() - width;
        tokens.drain(..cut);
        return (tokens, true);
    }
    let mut padded = vec![PAD; width - tokens.len()];
    padded.extend(tokens);
    (padded, false)
}

/// Training target: the answer's tokens, cut or padded with EOS to
/// `max_new_tokens`.
pub fn answer_target(tokenizer: &Tokenizer, answer: &str, max_new_tokens: usize) -> Vec<TokenId> {
    let mut ids = tokenizer.encode(answer);
    ids.truncate(max_new_tokens);
    ids.resize(max_new_tokens, EOS);
    ids
}

pub fn training_sequence(prompt: &BuiltPrompt, target: Vec<TokenId>) -> TrainingSequence {
    let mut tokens = prompt.tokens.clone();
    let prompt_len = tokens.len();
    tokens.extend(target);
    TrainingSequence { tokens, prompt_len }
}
