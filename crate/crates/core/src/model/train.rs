//! Masked-denoising training for [`ToyTransformer`].
//!
//! Each step draws a batch of sequences, masks every answer slot
//! independently with a rate drawn uniformly from `mask_rate_range`, and
//! minimises the mean cross-entropy of the original tokens at the masked
//! slots. Adam with linear warmup and decay, global-norm clipping.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DenoisingModel, ModelSpec, ToyTransformer};
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// One training example. Slots before `prompt_len` are never masked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub tokens: Vec<TokenId>,
    pub prompt_len: usize,
}

impl TrainingSequence {
    pub fn unconditional(tokens: Vec<TokenId>) -> Self {
        Self {
            tokens,
            prompt_len: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate_range: (f64, f64),
    /// Fraction of the corpus held out for loss measurement.
    pub holdout_fraction: f64,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 16,
            learning_rate: 3e-3,
            mask_rate_range: (0.05, 0.95),
            holdout_fraction: 0.1,
            warmup_steps: 100,
            grad_clip: 1.0,
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_holdout_loss: f64,
    pub final_holdout_loss: f64,
    /// (step, mean training loss over the preceding logging window)
    pub losses: Vec<(usize, f64)>,
    pub train_size: usize,
    pub holdout_size: usize,
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    const BETA1: f32 = 0.9;
    const BETA2: f32 = 0.999;
    const EPS: f32 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn check_range((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
        return Err(Error::Config(format!(
            "mask rate range ({lo}, {hi}) must lie inside (0, 1)"
        )));
    }
    Ok(())
}

/// Picks the masked slots of one sequence; at least one slot is masked
/// whenever the sequence has an answer region.
fn draw_mask<R: Rng>(seq: &TrainingSequence, range: (f64, f64), rng: &mut R) -> Vec<usize> {
    let rate = rng.gen_range(range.0..=range.1);
    let slots: Vec<usize> = (seq.prompt_len..seq.tokens.len()).collect();
    let mut masked: Vec<usize> = slots
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() < rate)
        .collect();
    if masked.is_empty() && !slots.is_empty() {
        masked.push(slots[rng.gen_range(0..slots.len())]);
    }
    masked
}

/// Cross-entropy over `masked` slots, with the gradient w.r.t. logits
/// scaled by `1 / normaliser` written into `dlogits` when provided.
fn masked_loss(
    logits: &Array2<f32>,
    targets: &[TokenId],
    masked: &[usize],
    normaliser: f32,
    mut dlogits: Option<&mut Array2<f32>>,
) -> f64 {
    let mut total = 0.0f64;
    for &i in masked {
        let row = logits.row(i);
        let max = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f32 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        let target = targets[i] as usize;
        total += f64::from(lse - row[target]);
        if let Some(d) = dlogits.as_deref_mut() {
            let mut drow = d.row_mut(i);
            for (j, g) in drow.iter_mut().enumerate() {
                *g = (row[j] - lse).exp() / normaliser;
            }
            drow[target] -= 1.0 / normaliser;
        }
    }
    total
}

/// Mean masked-token cross-entropy of `model` on `corpus`, with masks drawn
/// from a generator seeded by `seed` so repeated calls see identical masks.
pub fn masked_cross_entropy(
    model: &ToyTransformer,
    corpus: &[TrainingSequence],
    mask_rate_range: (f64, f64),
    seed: u64,
) -> Result<f64> {
    check_range(mask_rate_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in corpus {
        let masked = draw_mask(seq, mask_rate_range, &mut rng);
        if masked.is_empty() {
            continue;
        }
        let mut input = seq.tokens.clone();
        for &i in &masked {
            input[i] = model.spec().mask_id;
        }
        let acts = model.forward_cached(&input)?;
        total += masked_loss(&acts.logits, &seq.tokens, &masked, 1.0, None);
        count += masked.len();
    }
    if count == 0 {
        return Err(Error::Input("no maskable positions in corpus".into()));
    }
    Ok(total / count as f64)
}

/// Trains a freshly initialised model from `spec` on `corpus`.
///
/// The last `holdout_fraction` of a seeded shuffle of the corpus is held out;
/// its masked cross-entropy is measured before and after training.
pub fn train_toy_model(
    corpus: &[TrainingSequence],
    spec: ModelSpec,
    config: &TrainConfig,
) -> Result<(ToyTransformer, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::Input("training corpus is empty".into()));
    }
    check_range(config.mask_rate_range)?;
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut model = ToyTransformer::new(spec)?;
    for (i, seq) in corpus.iter().enumerate() {
        if seq.prompt_len > seq.tokens.len() {
            return Err(Error::Input(format!(
                "sequence {i}: prompt_len {} exceeds length {}",
                seq.prompt_len,
                seq.tokens.len()
            )));
        }
        model.check_input(&seq.tokens)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5_eed0_f7a1);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let n_holdout = if corpus.len() > 1 {
        ((corpus.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, corpus.len() - 1)
    } else {
        0
    };
    let (train_idx, holdout_idx) = order.split_at(corpus.len() - n_holdout);
    let train: Vec<&TrainingSequence> = train_idx.iter().map(|&i| &corpus[i]).collect();
    let holdout: Vec<TrainingSequence> = if holdout_idx.is_empty() {
        train.iter().map(|s| (*s).clone()).collect()
    } else {
        holdout_idx.iter().map(|&i| corpus[i].clone()).collect()
    };
    let eval_seed = spec.seed ^ 0xe7a1;
    let initial = masked_cross_entropy(&model, &holdout, config.mask_rate_range, eval_seed)?;

    let mut adam = Adam::new(model.num_params());
    let mut grads = vec![0.0f32; model.num_params()];
    let mut losses = Vec::new();
    let mut window = (0.0f64, 0usize);
    let mut cursor = train.len();
    let mut epoch_order: Vec<usize> = (0..train.len()).collect();

    for step in 0..config.steps {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            if cursor == train.len() {
                epoch_order.shuffle(&mut rng);
                cursor = 0;
            }
            let seq = train[epoch_order[cursor]];
            cursor += 1;
            let masked = draw_mask(seq, config.mask_rate_range, &mut rng);
            batch.push((seq, masked));
        }
        let normaliser = batch.iter().map(|(_, m)| m.len()).sum::<usize>().max(1) as f32;
        let mut step_loss = 0.0;
        for (seq, masked) in &batch {
            if masked.is_empty() {
                continue;
            }
            let mut input = seq.tokens.clone();
            for &i in masked {
                input[i] = spec.mask_id;
            }
            let acts = model.forward_cached(&input)?;
            let mut dlogits = Array2::<f32>::zeros(acts.logits.raw_dim());
            step_loss += masked_loss(&acts.logits, &seq.tokens, masked, normaliser, Some(&mut dlogits));
            model.backward(&acts, &dlogits, &mut grads);
        }
        let step_loss = step_loss / f64::from(normaliser);
        if !step_loss.is_finite() {
            return Err(Error::TrainingDivergence {
                step,
                loss: step_loss,
            });
        }

        let norm = grads.iter().map(|g| f64::from(*g).powi(2)).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::TrainingDivergence { step, loss: norm });
        }
        if norm > config.grad_clip && config.grad_clip > 0.0 {
            let s = (config.grad_clip / norm) as f32;
            grads.iter_mut().for_each(|g| *g *= s);
        }
        let lr = learning_rate_at(config, step);
        adam.step(model.params_mut(), &grads, lr as f32);

        window.0 += step_loss;
        window.1 += 1;
        if config.log_every > 0 && ((step + 1) % config.log_every == 0 || step + 1 == config.steps) {
            let mean = window.0 / window.1 as f64;
            log::debug!("step {:>6}  loss {:.4}", step + 1, mean);
            losses.push((step + 1, mean));
            window = (0.0, 0);
        }
    }

    let final_loss = masked_cross_entropy(&model, &holdout, config.mask_rate_range, eval_seed)?;
    let report = TrainReport {
        initial_holdout_loss: initial,
        final_holdout_loss: final_loss,
        losses,
        train_size: train.len(),
        holdout_size: holdout_idx.len(),
    };
    Ok((model, report))
}

fn learning_rate_at(config: &TrainConfig, step: usize) -> f64 {
    let base = config.learning_rate;
    if step < config.warmup_steps {
        return base * (step + 1) as f64 / config.warmup_steps as f64;
    }
    let span = config.steps.saturating_sub(config.warmup_steps).max(1);
    let progress = (step - config.warmup_steps) as f64 / span as f64;
    base * (1.0 - 0.9 * progress)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModelSpec {
        ModelSpec {
            vocab_size: 12,
            hidden_dim: 16,
            n_layers: 1,
            n_heads: 2,
            max_seq_len: 10,
            mask_id: 2,
            seed: 21,
        }
    }

    fn corpus() -> Vec<TrainingSequence> {
        // copy task: second half repeats the first half
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..60)
            .map(|_| {
                let half: Vec<TokenId> = (0..4).map(|_| rng.gen_range(4..12)).collect();
                let mut tokens = half.clone();
                tokens.push(3);
                tokens.extend(&half);
                TrainingSequence {
                    tokens,
                    prompt_len: 5,
                }
            })
            .collect()
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            train_toy_model(&[], spec(), &TrainConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn mask_range_must_be_inside_unit_interval() {
        let config = TrainConfig {
            mask_rate_range: (0.0, 0.5),
            ..TrainConfig::default()
        };
        assert!(train_toy_model(&corpus(), spec(), &config).is_err());
    }

    #[test]
    fn zero_steps_returns_the_initialisation() {
        let config = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let (model, report) = train_toy_model(&corpus(), spec(), &config).unwrap();
        assert_eq!(model, ToyTransformer::new(spec()).unwrap());
        assert_eq!(report.initial_holdout_loss, report.final_holdout_loss);
    }

    #[test]
    fn training_is_deterministic_and_reduces_holdout_loss() {
        let config = TrainConfig {
            steps: 150,
            batch_size: 8,
            warmup_steps: 10,
            log_every: 50,
            ..TrainConfig::default()
        };
        let (a, report) = train_toy_model(&corpus(), spec(), &config).unwrap();
        let (b, _) = train_toy_model(&corpus(), spec(), &config).unwrap();
        assert_eq!(a.params(), b.params());
        assert!(
            report.final_holdout_loss < report.initial_holdout_loss,
            "{report:?}"
        );
        assert_eq!(report.losses.len(), 3);
    }
}
