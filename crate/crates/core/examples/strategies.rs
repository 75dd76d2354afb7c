//! Runs the denoising loop once per unmasking strategy on an untrained toy model.

use spread_rag::model::{ModelSpec, ToyTransformer};
use spread_rag::scheduler::{generate, GenConfig, StrategyKind};
use spread_rag::tokenizer::MASK;

fn main() -> spread_rag::Result<()> {
    let model = ToyTransformer::new(ModelSpec {
        vocab_size: 24,
        hidden_dim: 16,
        n_layers: 1,
        n_heads: 2,
        max_seq_len: 32,
        mask_id: MASK,
        seed: 3,
    })?;
    let prompt = [5, 9, 12, 7];
    for strategy in StrategyKind::ALL {
        let cfg = GenConfig { diffusion_steps: 4, max_new_tokens: 8, temperature: 0.1, strategy, seed: 1 };
        let g = generate(&model, &prompt, Some(&prompt), &cfg)?;
        let order: Vec<Vec<usize>> = g.trace.steps.iter().map(|s| s.decision.positions.clone()).collect();
        println!(
            "{strategy:>15}: order {order:?}  forwards {}  canvas {:?}",
            g.trace.forward_calls,
            g.canvas.answer()
        );
    }
    Ok(())
}
