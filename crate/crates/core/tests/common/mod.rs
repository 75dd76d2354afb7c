#![allow(dead_code)]

use std::cmp::Ordering;

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spread_rag::model::{ForwardOutput, ModelSpec, ToyTransformer};
use spread_rag::relevance::QueryVector;
use spread_rag::sampling::sample_token;
use spread_rag::scheduler::{unmask_budget, Generation, GenConfig, StrategyKind};
use spread_rag::tokenizer::TokenId;

/// A random selection problem: one forward output, a masked subset, a budget.
pub struct Instance {
    pub output: ForwardOutput,
    pub masked: Vec<usize>,
    pub budget: usize,
    pub temperature: f64,
    pub query: QueryVector,
    pub rng_seed: u64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(1..=40);
    let vocab = rng.gen_range(2..=12);
    let dim = rng.gen_range(2..=8);
    let n_masked = rng.gen_range(1..=len.min(20));
    let mut positions: Vec<usize> = (0..len).collect();
    for i in 0..n_masked {
        let j = rng.gen_range(i..len);
        positions.swap(i, j);
    }
    let mut masked = positions[..n_masked].to_vec();
    masked.sort_unstable();

    let scale = [0.5, 2.0, 8.0][rng.gen_range(0..3)];
    let mut logits = Array2::from_shape_fn((len, vocab), |_| rng.gen_range(-1.0..1.0) * scale);
    let mut hidden = Array2::from_shape_fn((len, dim), |_| rng.gen_range(-1.0..1.0));
    // Duplicate some rows so exact ties occur.
    for _ in 0..rng.gen_range(0..4) {
        let (a, b) = (rng.gen_range(0..len), rng.gen_range(0..len));
        let row = logits.row(a).to_owned();
        logits.row_mut(b).assign(&row);
        let row = hidden.row(a).to_owned();
        hidden.row_mut(b).assign(&row);
    }
    let query: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Instance {
        output: ForwardOutput::new(logits, hidden).unwrap(),
        masked,
        budget: rng.gen_range(1..=n_masked),
        temperature: [0.0, 0.1, 1.0][rng.gen_range(0..3)],
        query: QueryVector::new(query).unwrap(),
        rng_seed: rng.next_u64(),
    }
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Full sort by score then position; keep the first `k`, report ascending.
fn sort_oracle(mut scored: Vec<(usize, f64)>, k: usize, highest_first: bool) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| {
        let s = if highest_first { b.1.partial_cmp(&a.1) } else { a.1.partial_cmp(&b.1) };
        s.unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored.sort_by_key(|p| p.0);
    scored
}

pub struct OracleSelection {
    pub chosen: Vec<(usize, f64)>,
    pub tokens: Option<Vec<TokenId>>,
}

/// Brute-force selection written directly from each strategy's definition.
pub fn oracle_select(kind: StrategyKind, inst: &Instance) -> OracleSelection {
    let out = &inst.output;
    let k = inst.budget;
    let mut rng = ChaCha8Rng::seed_from_u64(inst.rng_seed);
    match kind {
        StrategyKind::Random => {
            let keys = inst.masked.iter().map(|&p| (p, rng.gen::<f64>())).collect();
            OracleSelection { chosen: sort_oracle(keys, k, false), tokens: None }
        }
        StrategyKind::LowConfidence => {
            let s = inst
                .masked
                .iter()
                .map(|&p| (p, softmax(out.logit_row(p)).into_iter().fold(0.0, f64::max)))
                .collect();
            OracleSelection { chosen: sort_oracle(s, k, true), tokens: None }
        }
        StrategyKind::Entropy => {
            let s = inst
                .masked
                .iter()
                .map(|&p| {
                    let h = softmax(out.logit_row(p)).iter().filter(|q| **q > 0.0).map(|q| -q * q.ln()).sum();
                    (p, h)
                })
                .collect();
            OracleSelection { chosen: sort_oracle(s, k, false), tokens: None }
        }
        StrategyKind::MaskgitPlus => {
            let mut cand = Vec::new();
            let s = inst
                .masked
                .iter()
                .map(|&p| {
                    let t = sample_token(out.logit_row(p), inst.temperature, &mut rng).unwrap();
                    cand.push((p, t));
                    (p, softmax(out.logit_row(p))[t as usize])
                })
                .collect();
            let chosen = sort_oracle(s, k, true);
            let tokens = chosen
                .iter()
                .map(|(p, _)| cand.iter().find(|c| c.0 == *p).unwrap().1)
                .collect();
            OracleSelection { chosen, tokens: Some(tokens) }
        }
        StrategyKind::Spread => {
            let q = inst.query.values();
            let s = inst
                .masked
                .iter()
                .map(|&p| {
                    let h = out.hidden_row(p);
                    let dot: f64 = h.iter().zip(q).map(|(a, b)| a * b).sum();
                    let nh = h.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (p, 1.0 / (1.0 + (-(dot / (nh * nq))).exp()))
                })
                .collect();
            OracleSelection { chosen: sort_oracle(s, k, true), tokens: None }
        }
    }
}

pub fn toy_model(seed: u64, vocab: usize, max_seq_len: usize) -> ToyTransformer {
    ToyTransformer::new(ModelSpec {
        vocab_size: vocab,
        hidden_dim: 16,
        n_layers: 1,
        n_heads: 2,
        max_seq_len,
        mask_id: spread_rag::tokenizer::MASK,
        seed,
    })
    .unwrap()
}

/// Checks the denoising-loop invariants on one finished generation.
pub fn check_loop_invariants(g: &Generation, prompt: &[TokenId], cfg: &GenConfig) -> Result<(), String> {
    let mask = g.canvas.mask_id();
    if g.canvas.prompt() != prompt {
        return Err("prompt changed".into());
    }
    if g.trace.steps.len() != cfg.diffusion_steps {
        return Err(format!("{} steps, expected {}", g.trace.steps.len(), cfg.diffusion_steps));
    }
    let mut remaining = cfg.max_new_tokens;
    let mut total = 0;
    for (t, step) in g.trace.steps.iter().enumerate() {
        let expected = unmask_budget(remaining, cfg.diffusion_steps - t);
        if step.budget != expected || step.decision.positions.len() != expected {
            return Err(format!("step {t}: budget {} expected {expected}", step.budget));
        }
        if expected == 0 {
            return Err(format!("step {t}: masks did not shrink"));
        }
        if step.tokens.contains(&mask) {
            return Err(format!("step {t}: committed MASK"));
        }
        if step.decision.positions.iter().any(|&p| p < prompt.len()) {
            return Err(format!("step {t}: decoded a prompt position"));
        }
        remaining -= expected;
        total += expected;
    }
    if total != cfg.max_new_tokens {
        return Err(format!("sum of budgets {total} != {}", cfg.max_new_tokens));
    }
    if !g.canvas.masked_positions().is_empty() {
        return Err("masks remain".into());
    }
    Ok(())
}
