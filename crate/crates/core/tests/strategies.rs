mod common;

use common::{check_loop_invariants, oracle_select, random_instance, toy_model};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spread_rag::model::CountingModel;
use spread_rag::scheduler::{generate, GenConfig, SelectionContext, StrategyKind, UnmaskStrategy};

fn agree(kind: StrategyKind, seed: u64) -> Result<(), TestCaseError> {
    let inst = random_instance(seed);
    let ctx = SelectionContext {
        output: &inst.output,
        masked: &inst.masked,
        budget: inst.budget,
        temperature: inst.temperature,
        query: Some(&inst.query),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(inst.rng_seed);
    let got = kind.select(&ctx, &mut rng).unwrap();
    let want = oracle_select(kind, &inst);
    let positions: Vec<usize> = want.chosen.iter().map(|c| c.0).collect();
    prop_assert_eq!(&got.positions, &positions);
    for (p, s) in &want.chosen {
        prop_assert!((got.scores[p] - s).abs() <= 1e-12, "score at {}: {} vs {}", p, got.scores[p], s);
    }
    if let Some(tokens) = want.tokens {
        let got_tokens: Vec<u32> = got.positions.iter().map(|p| got.tokens.as_ref().unwrap()[p]).collect();
        prop_assert_eq!(got_tokens, tokens);
    }
    Ok(())
}

proptest! {
    #[test]
    fn selections_match_sort_oracles(seed in any::<u64>()) {
        for kind in StrategyKind::ALL {
            agree(kind, seed)?;
        }
    }

    #[test]
    fn loop_invariants_hold(
        seed in any::<u64>(),
        prompt_len in 1usize..8,
        new in 1usize..24,
        steps_frac in 0.0f64..1.0,
        kind in prop::sample::select(StrategyKind::ALL.to_vec()),
    ) {
        let model = CountingModel::new(toy_model(seed % 16, 11, 32));
        let prompt: Vec<u32> = (0..prompt_len as u32).map(|i| 4 + i % 7).collect();
        let steps = 1 + ((new - 1) as f64 * steps_frac) as usize;
        let cfg = GenConfig { diffusion_steps: steps, max_new_tokens: new, temperature: 0.1, strategy: kind, seed };
        let g = generate(&model, &prompt, Some(&prompt), &cfg).unwrap();
        if let Err(e) = check_loop_invariants(&g, &prompt, &cfg) {
            return Err(TestCaseError::fail(e));
        }
        let expected_calls = steps + usize::from(kind == StrategyKind::Spread);
        prop_assert_eq!(model.calls(), expected_calls);
        prop_assert_eq!(g.trace.forward_calls, expected_calls);
    }
}
