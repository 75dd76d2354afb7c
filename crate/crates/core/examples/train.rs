//! Trains a tiny toy transformer on two repeating patterns and reports held-out loss.

use spread_rag::model::{train_toy_model, ModelSpec, TrainConfig, TrainingSequence};
use spread_rag::tokenizer::MASK;

fn main() -> spread_rag::Result<()> {
    let sequences: Vec<TrainingSequence> = (0..64u32)
        .map(|i| TrainingSequence::unconditional((0..10).map(|j| 4 + (j * (1 + i % 2)) % 12).collect()))
        .collect();
    let spec = ModelSpec {
        vocab_size: 16,
        hidden_dim: 32,
        n_layers: 1,
        n_heads: 2,
        max_seq_len: 10,
        mask_id: MASK,
        seed: 1,
    };
    let cfg = TrainConfig { steps: 300, learning_rate: 1e-2, log_every: 50, ..TrainConfig::default() };
    let (_, report) = train_toy_model(&sequences, spec, &cfg)?;
    println!("held-out loss {:.3} -> {:.3}", report.initial_holdout_loss, report.final_holdout_loss);
    for (step, loss) in &report.losses {
        println!("step {step:>4}  train loss {loss:.3}");
    }
    Ok(())
}
