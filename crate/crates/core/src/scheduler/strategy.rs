//! Unmasking strategies.
//!
//! Every strategy scores the currently masked positions and keeps the
//! `budget` best ones. Ties are always broken towards the lowest position.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardOutput;
use crate::relevance::{relevance_scores, select_spread, QueryVector};
use crate::sampling::{entropy, sample_token, softmax, top_probability};
use crate::tokenizer::TokenId;

/// Positions chosen for decoding at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmaskDecision {
    /// Ascending.
    pub positions: Vec<usize>,
    /// Ranking score of every selected position.
    pub scores: BTreeMap<usize, f64>,
    /// Tokens already drawn by the strategy; positions missing here are
    /// sampled by the denoising loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<BTreeMap<usize, TokenId>>,
}

/// Everything a strategy may look at when choosing positions.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub output: &'a ForwardOutput,
    /// Ascending.
    pub masked: &'a [usize],
    pub budget: usize,
    pub temperature: f64,
    pub query: Option<&'a QueryVector>,
}

pub trait UnmaskStrategy: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the loop must encode the query before the first step.
    fn needs_query(&self) -> bool {
        false
    }

    fn select(&self, ctx: &SelectionContext<'_>, rng: &mut dyn RngCore) -> Result<UnmaskDecision>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyKind {
    Random,
    LowConfidence,
    Entropy,
    MaskgitPlus,
    Spread,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::LowConfidence,
        StrategyKind::Entropy,
        StrategyKind::MaskgitPlus,
        StrategyKind::Spread,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::LowConfidence => "low-confidence",
            StrategyKind::Entropy => "entropy",
            StrategyKind::MaskgitPlus => "maskgit-plus",
            StrategyKind::Spread => "spread",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?}; expected one of random, low-confidence, entropy, maskgit-plus, spread"
                ))
            })
    }
}

impl TryFrom<String> for StrategyKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StrategyKind> for String {
    fn from(k: StrategyKind) -> Self {
        k.as_str().to_string()
    }
}

impl UnmaskStrategy for StrategyKind {
    fn name(&self) -> &str {
        self.as_str()
    }

    fn needs_query(&self) -> bool {
        matches!(self, StrategyKind::Spread)
    }

    fn select(&self, ctx: &SelectionContext<'_>, rng: &mut dyn RngCore) -> Result<UnmaskDecision> {
        match self {
            StrategyKind::Random => select_random(ctx.masked, ctx.budget, rng),
            StrategyKind::LowConfidence => select_low_confidence(ctx.output, ctx.masked, ctx.budget),
            StrategyKind::Entropy => select_entropy(ctx.output, ctx.masked, ctx.budget),
            StrategyKind::MaskgitPlus => {
                select_maskgit_plus(ctx.output, ctx.masked, ctx.budget, ctx.temperature, rng)
            }
            StrategyKind::Spread => {
                let query = ctx.query.ok_or_else(|| {
                    Error::ContractViolation("spread selection requires an encoded query".into())
                })?;
                let scores = relevance_scores(ctx.output, ctx.masked, query)?;
                select_spread(&scores, ctx.budget)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    HighestFirst,
    LowestFirst,
}

fn check_budget(budget: usize, available: usize) -> Result<()> {
    if budget > available {
        return Err(Error::Budget { budget, available });
    }
    Ok(())
}

/// Keeps the `k` best `(position, score)` pairs; equal scores prefer the
/// lower position. Returns the survivors in ascending position order.
pub fn top_k(mut scored: Vec<(usize, f64)>, k: usize, rank: Rank) -> Result<UnmaskDecision> {
    check_budget(k, scored.len())?;
    if let Some((pos, _)) = scored.iter().find(|(_, s)| s.is_nan()) {
        return Err(Error::Input(format!("score at position {pos} is NaN")));
    }
    let cmp = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
        let by_score = match rank {
            Rank::HighestFirst => b.1.total_cmp(&a.1),
            Rank::LowestFirst => a.1.total_cmp(&b.1),
        };
        by_score.then(a.0.cmp(&b.0))
    };
    if k < scored.len() && k > 0 {
        scored.select_nth_unstable_by(k - 1, cmp);
    }
    scored.truncate(k);
    scored.sort_by_key(|&(p, _)| p);
    Ok(UnmaskDecision {
        positions: scored.iter().map(|&(p, _)| p).collect(),
        scores: scored.into_iter().collect(),
        tokens: None,
    })
}

/// Uniform `k`-subset: one uniform key per masked position (drawn in
/// ascending position order), keep the `k` smallest keys.
pub fn select_random(masked: &[usize], k: usize, rng: &mut dyn RngCore) -> Result<UnmaskDecision> {
    check_budget(k, masked.len())?;
    let scored = masked.iter().map(|&p| (p, rng.gen::<f64>())).collect();
    top_k(scored, k, Rank::LowestFirst)
}

/// Decodes the `k` positions with the highest top-1 probability.
pub fn select_low_confidence(
    output: &ForwardOutput,
    masked: &[usize],
    k: usize,
) -> Result<UnmaskDecision> {
    check_budget(k, masked.len())?;
    let scored = masked
        .iter()
        .map(|&p| Ok((p, top_probability(output.logit_row(p))?)))
        .collect::<Result<_>>()?;
    top_k(scored, k, Rank::HighestFirst)
}

/// Decodes the `k` positions whose predictive distribution has the lowest
/// entropy.
pub fn select_entropy(output: &ForwardOutput, masked: &[usize], k: usize) -> Result<UnmaskDecision> {
    check_budget(k, masked.len())?;
    let scored = masked
        .iter()
        .map(|&p| Ok((p, entropy(output.logit_row(p))?)))
        .collect::<Result<_>>()?;
    top_k(scored, k, Rank::LowestFirst)
}

/// Draws a candidate token per masked position at `temperature` (ascending
/// position order) and ranks positions by the untempered probability of
/// their candidate. The candidates of the chosen positions are committed.
///
/// This is a stand-in rule: at temperature 0 every candidate is the argmax
/// and the selection equals [`select_low_confidence`].
pub fn select_maskgit_plus(
    output: &ForwardOutput,
    masked: &[usize],
    k: usize,
    temperature: f64,
    rng: &mut dyn RngCore,
) -> Result<UnmaskDecision> {
    check_budget(k, masked.len())?;
    let mut candidates = BTreeMap::new();
    let mut scored = Vec::with_capacity(masked.len());
    for &p in masked {
        let row = output.logit_row(p);
        let token = sample_token(row, temperature, rng)?;
        let probs = softmax(row)?;
        scored.push((p, probs[token as usize]));
        candidates.insert(p, token);
    }
    let mut decision = top_k(scored, k, Rank::HighestFirst)?;
    decision.tokens = Some(
        decision
            .positions
            .iter()
            .map(|p| (*p, candidates[p]))
            .collect(),
    );
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn output_from_rows(rows: &[(usize, Vec<f64>)], len: usize, vocab: usize) -> ForwardOutput {
        let mut logits = Array2::zeros((len, vocab));
        for (p, row) in rows {
            for (j, v) in row.iter().enumerate() {
                logits[[*p, j]] = *v;
            }
        }
        ForwardOutput::new(logits, Array2::ones((len, 2))).unwrap()
    }

    /// Logit row whose softmax top probability is exactly `p` over 2 classes.
    fn row_with_top(p: f64) -> Vec<f64> {
        vec![(p / (1.0 - p)).ln(), 0.0]
    }

    #[test]
    fn low_confidence_keeps_highest_probabilities() {
        let out = output_from_rows(
            &[(4, row_with_top(0.9)), (6, row_with_top(0.6)), (9, row_with_top(0.7))],
            10,
            2,
        );
        let d = select_low_confidence(&out, &[4, 6, 9], 2).unwrap();
        assert_eq!(d.positions, vec![4, 9]);
        assert!((d.scores[&4] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn one_hot_ties_resolve_to_lowest_positions() {
        let hot = vec![50.0, 0.0, 0.0];
        let out = output_from_rows(&[(3, hot.clone()), (5, hot.clone()), (7, hot)], 8, 3);
        let d = select_low_confidence(&out, &[7, 3, 5], 2).unwrap();
        assert_eq!(d.positions, vec![3, 5]);
    }

    #[test]
    fn entropy_prefers_peaked_rows() {
        let out = output_from_rows(&[(1, vec![100.0, 0.0, 0.0]), (2, vec![0.0, 0.0, 0.0])], 3, 3);
        let d = select_entropy(&out, &[1, 2], 1).unwrap();
        assert_eq!(d.positions, vec![1]);
        assert!((d.scores[&1]).abs() < 1e-12);
    }

    #[test]
    fn random_forced_and_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_random(&[3], 1, &mut rng).unwrap().positions, vec![3]);
        let all: Vec<usize> = (1..=100).collect();
        assert_eq!(select_random(&all, 100, &mut rng).unwrap().positions, all);
    }

    #[test]
    fn random_is_reproducible_from_seed() {
        let pick = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            select_random(&[2, 5, 8], 2, &mut rng).unwrap().positions
        };
        let first = pick();
        assert_eq!(first.len(), 2);
        for _ in 0..5 {
            assert_eq!(pick(), first);
        }
    }

    #[test]
    fn budget_larger_than_mask_set_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            select_random(&[1, 2], 3, &mut rng),
            Err(Error::Budget { budget: 3, available: 2 })
        ));
        let out = output_from_rows(&[], 4, 2);
        assert!(select_entropy(&out, &[1], 2).is_err());
        assert!(select_low_confidence(&out, &[1], 2).is_err());
    }

    #[test]
    fn maskgit_plus_at_zero_temperature_matches_low_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<(usize, Vec<f64>)> = (0..8)
            .map(|p| (p, (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect()))
            .collect();
        let out = output_from_rows(&rows, 8, 5);
        let masked: Vec<usize> = (0..8).collect();
        let a = select_maskgit_plus(&out, &masked, 3, 0.0, &mut rng).unwrap();
        let b = select_low_confidence(&out, &masked, 3).unwrap();
        assert_eq!(a.positions, b.positions);
        for p in &a.positions {
            let row = out.logit_row(*p);
            assert_eq!(a.tokens.as_ref().unwrap()[p] as usize, crate::sampling::argmax(row));
        }
    }

    #[test]
    fn maskgit_plus_with_one_hot_rows_ignores_rng() {
        let rows: Vec<(usize, Vec<f64>)> = (0..6)
            .map(|p| {
                let mut r = vec![f64::NEG_INFINITY; 4];
                r[p % 4] = 0.0;
                (p, r)
            })
            .collect();
        let out = output_from_rows(&rows, 6, 4);
        let masked: Vec<usize> = (0..6).collect();
        let picks: Vec<_> = [1u64, 2, 3]
            .iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                select_maskgit_plus(&out, &masked, 2, 0.1, &mut rng).unwrap()
            })
            .collect();
        assert_eq!(picks[0], picks[1]);
        assert_eq!(picks[1], picks[2]);
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("greedy".parse::<StrategyKind>().is_err());
        let json = serde_json::to_string(&StrategyKind::LowConfidence).unwrap();
        assert_eq!(json, "\"low-confidence\"");
    }
}
