//! The iterative denoising loop.
//!
//! A canvas of `prompt ++ [MASK; max_new_tokens]` is refined over `T` steps.
//! Each step runs one forward pass, asks the strategy which masked positions
//! to decode, and commits tokens for exactly those positions.

mod strategy;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use strategy::{
    select_entropy, select_low_confidence, select_maskgit_plus, select_random, top_k, Rank,
    SelectionContext, StrategyKind, UnmaskDecision, UnmaskStrategy,
};

use crate::error::{Error, Result};
use crate::model::{DenoisingModel, TokenSequence};
use crate::relevance::encode_query;
use crate::sampling::sample_token;
use crate::tokenizer::{TokenId, EOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub diffusion_steps: usize,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub strategy: StrategyKind,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            diffusion_steps: 128,
            max_new_tokens: 512,
            temperature: 0.1,
            strategy: StrategyKind::LowConfidence,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.diffusion_steps == 0 || self.max_new_tokens == 0 {
            return Err(Error::Config(
                "diffusion_steps and max_new_tokens must be positive".into(),
            ));
        }
        if self.diffusion_steps > self.max_new_tokens {
            return Err(Error::Config(format!(
                "diffusion_steps ({}) exceeds max_new_tokens ({})",
                self.diffusion_steps, self.max_new_tokens
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// `ceil(remaining_masks / remaining_steps)`.
///
/// # Panics
///
/// If `remaining_steps` is zero.
pub fn unmask_budget(remaining_masks: usize, remaining_steps: usize) -> usize {
    assert!(remaining_steps >= 1, "remaining_steps must be at least 1");
    remaining_masks.div_ceil(remaining_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub budget: usize,
    pub decision: UnmaskDecision,
    /// Committed tokens, aligned with `decision.positions`.
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub strategy: String,
    pub prompt_len: usize,
    pub steps: Vec<StepRecord>,
    /// Answer tokens up to (excluding) the first EOS.
    pub answer: Vec<TokenId>,
    pub forward_calls: usize,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub canvas: TokenSequence,
    pub trace: GenerationTrace,
}

impl Generation {
    pub fn answer(&self) -> &[TokenId] {
        &self.trace.answer
    }
}

/// Runs the denoising loop with the strategy named in `config`.
pub fn generate<M: DenoisingModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    query: Option<&[TokenId]>,
    config: &GenConfig,
) -> Result<Generation> {
    generate_with(model, prompt, query, config, &config.strategy)
}

/// Runs the denoising loop with an arbitrary strategy; `config.strategy` is
/// ignored.
pub fn generate_with<M, S>(
    model: &M,
    prompt: &[TokenId],
    query: Option<&[TokenId]>,
    config: &GenConfig,
    strategy: &S,
) -> Result<Generation>
where
    M: DenoisingModel + ?Sized,
    S: UnmaskStrategy + ?Sized,
{
    config.validate()?;
    let total = prompt.len() + config.max_new_tokens;
    if total > model.max_seq_len() {
        return Err(Error::Config(format!(
            "prompt ({}) + max_new_tokens ({}) exceeds the model's max_seq_len ({})",
            prompt.len(),
            config.max_new_tokens,
            model.max_seq_len()
        )));
    }
    let mask_id = model.mask_id();
    let mut canvas = TokenSequence::canvas(prompt, config.max_new_tokens, mask_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut forward_calls = 0;

    let started = Instant::now();
    let query_vector = if strategy.needs_query() {
        let q = query.ok_or_else(|| {
            Error::Config(format!("strategy {} needs query tokens", strategy.name()))
        })?;
        forward_calls += 1;
        Some(encode_query(model, q)?)
    } else {
        None
    };

    let mut steps = Vec::with_capacity(config.diffusion_steps);
    for step in 0..config.diffusion_steps {
        let masked = canvas.masked_positions();
        let budget = unmask_budget(masked.len(), config.diffusion_steps - step);
        let mut output = model.forward(canvas.tokens())?;
        forward_calls += 1;
        if (mask_id as usize) < output.logits.ncols() {
            output.logits.column_mut(mask_id as usize).fill(f64::NEG_INFINITY);
        }
        let ctx = SelectionContext {
            output: &output,
            masked: &masked,
            budget,
            temperature: config.temperature,
            query: query_vector.as_ref(),
        };
        let decision = strategy.select(&ctx, &mut rng)?;
        check_decision(&decision, &masked, budget, strategy.name())?;

        let mut tokens = Vec::with_capacity(budget);
        for &pos in &decision.positions {
            let token = match decision.tokens.as_ref().and_then(|t| t.get(&pos)) {
                Some(&t) => t,
                None => sample_token(output.logit_row(pos), config.temperature, &mut rng)?,
            };
            canvas.commit(pos, token)?;
            tokens.push(token);
        }
        steps.push(StepRecord {
            step,
            budget,
            decision,
            tokens,
        });
    }
    let duration_seconds = started.elapsed().as_secs_f64();

    if !canvas.masked_positions().is_empty() {
        return Err(Error::Generation("masks remain after the final step".into()));
    }
    let answer = canvas.answer();
    let end = answer.iter().position(|&t| t == EOS).unwrap_or(answer.len());
    let trace = GenerationTrace {
        strategy: strategy.name().to_string(),
        prompt_len: prompt.len(),
        steps,
        answer: answer[..end].to_vec(),
        forward_calls,
        duration_seconds,
    };
    Ok(Generation { canvas, trace })
}

fn check_decision(decision: &UnmaskDecision, masked: &[usize], budget: usize, name: &str) -> Result<()> {
    let fail = |why: String| Err(Error::ContractViolation(format!("strategy {name}: {why}")));
    if decision.positions.len() != budget {
        return fail(format!(
            "selected {} positions, budget is {budget}",
            decision.positions.len()
        ));
    }
    if decision.positions.windows(2).any(|w| w[0] >= w[1]) {
        return fail("positions are not strictly ascending".into());
    }
    for p in &decision.positions {
        if masked.binary_search(p).is_err() {
            return fail(format!("position {p} is not masked"));
        }
    }
    if let Some(tokens) = &decision.tokens {
        if let Some(p) = tokens.keys().find(|p| decision.positions.binary_search(p).is_err()) {
            return fail(format!("token supplied for unselected position {p}"));
        }
    }
    Ok(())
}
