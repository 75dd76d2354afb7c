//! Softmax helpers and temperature sampling over a single logit row.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax. Entries of `-inf` get probability zero.
pub fn softmax(row: &[f64]) -> Result<Vec<f64>> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    let mut probs: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Ok(probs)
}

/// Largest softmax probability of the row.
pub fn top_probability(row: &[f64]) -> Result<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    Ok(1.0 / sum)
}

/// Shannon entropy (nats) of the softmax of the row.
pub fn entropy(row: &[f64]) -> Result<f64> {
    let probs = softmax(row)?;
    Ok(-probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>())
}

/// Draws a token from `softmax(row / temperature)`; temperature 0 is argmax.
pub fn sample_token<R: Rng + ?Sized>(row: &[f64], temperature: f64, rng: &mut R) -> Result<TokenId> {
    if temperature.is_nan() || temperature < 0.0 {
        return Err(Error::Input(format!("temperature {temperature} must be >= 0")));
    }
    if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Input("logit row holds NaN or +inf".into()));
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    if temperature == 0.0 {
        return Ok(argmax(row) as TokenId);
    }
    let weights: Vec<f64> = row
        .iter()
        .map(|&v| ((v - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = i;
        if target < w {
            return Ok(i as TokenId);
        }
        target -= w;
    }
    Ok(last_positive as TokenId)
}
