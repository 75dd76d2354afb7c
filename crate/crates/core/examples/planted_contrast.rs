//! The fixture where confidence and query relevance disagree: SPREAD decodes
//! the answer first, low-confidence decodes the distractor first.

use spread_rag::harness::planted_fixture;
use spread_rag::scheduler::{generate, GenConfig, StrategyKind};

fn main() -> spread_rag::Result<()> {
    let question = "what does the zorp like";
    let words: Vec<&str> = question.split(' ').collect();
    let planted = planted_fixture(&words, "mud", ["sand", "eats"], 64, 0)?;
    let (model, tok) = planted.fixture.build()?;
    let prompt = tok.encode(question);
    for strategy in [StrategyKind::Spread, StrategyKind::LowConfidence] {
        let cfg = GenConfig { diffusion_steps: 2, max_new_tokens: 2, temperature: 0.0, strategy, seed: 0 };
        let g = generate(&model, &prompt, Some(&prompt), &cfg)?;
        let first = tok.decode(&g.trace.steps[0].tokens)?;
        println!("{strategy:>15}: first commit {first:?}, answer {:?}", tok.decode(g.answer())?);
    }
    Ok(())
}
