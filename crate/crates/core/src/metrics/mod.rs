//! Answer-quality metrics: token P/R/F1, copy rate, redundancy, ROUGE,
//! response semantic drift (RSD) and Pearson correlation.

mod encoder;
mod report;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use encoder::{HashSentenceEncoder, SentenceEncoder, TableEncoder};
pub use report::{
    read_answer_records, write_answer_records, write_summary_csv, AnswerMetrics, AnswerRecord,
    MetricReport, StrategySummary,
};

use crate::error::{Error, Result};
use crate::relevance::cosine;
use crate::text::{split_sentences, words};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(overlap: usize, n_pred: usize, n_ref: usize) -> Self {
        match (n_pred, n_ref) {
            (0, 0) => return Prf { precision: 1.0, recall: 1.0, f1: 1.0 },
            (0, _) | (_, 0) => return Prf { precision: 0.0, recall: 0.0, f1: 0.0 },
            _ => {}
        }
        let precision = overlap as f64 / n_pred as f64;
        let recall = overlap as f64 / n_ref as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in b {
        *counts.entry(w).or_default() += 1;
    }
    a.iter()
        .filter(|w| match counts.get_mut(w.as_str()) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Token-level precision/recall/F1 over multiset word overlap.
pub fn token_prf(pred: &str, gold: &str) -> Prf {
    let p = words(pred);
    let g = words(gold);
    Prf::from_counts(multiset_overlap(&p, &g), p.len(), g.len())
}

/// Fraction of answer words whose type appears in the context.
pub fn copy_rate(answer: &str, context: &str) -> f64 {
    let a = words(answer);
    if a.is_empty() {
        return 0.0;
    }
    let ctx: HashSet<String> = words(context).into_iter().collect();
    a.iter().filter(|w| ctx.contains(*w)).count() as f64 / a.len() as f64
}

/// `1 - distinct / total` over answer words; 0 for at most one word.
pub fn redundancy(answer: &str) -> f64 {
    let a = words(answer);
    if a.len() <= 1 {
        return 0.0;
    }
    let distinct: HashSet<&String> = a.iter().collect();
    1.0 - distinct.len() as f64 / a.len() as f64
}

pub fn rouge1(pred: &str, reference: &str) -> Prf {
    let p = words(pred);
    let r = words(reference);
    Prf::from_counts(multiset_overlap(&p, &r), p.len(), r.len())
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[allow(non_snake_case)]
pub fn rougeL(pred: &str, reference: &str) -> Prf {
    let p = words(pred);
    let r = words(reference);
    Prf::from_counts(lcs_len(&p, &r), p.len(), r.len())
}

/// `1 - cosine` between the encoded sentences.
pub fn sentence_distance(a: &str, b: &str, encoder: &dyn SentenceEncoder) -> Result<f64> {
    let ea = encoder.embed(a)?;
    let eb = encoder.embed(b)?;
    if ea.len() != eb.len() {
        return Err(Error::Shape {
            expected: format!("embedding dimension {}", ea.len()),
            actual: format!("embedding dimension {}", eb.len()),
        });
    }
    let c = cosine(&ea, &eb).ok_or_else(|| {
        Error::DegenerateEmbedding(format!("zero sentence embedding for {a:?} or {b:?}"))
    })?;
    Ok(1.0 - c)
}

/// Mean distance between adjacent sentences; `None` for fewer than two.
pub fn rsd(answer: &str, encoder: &dyn SentenceEncoder) -> Result<Option<f64>> {
    let sentences = split_sentences(answer);
    if sentences.len() < 2 {
        return Ok(None);
    }
    let mut total = 0.0;
    for pair in sentences.windows(2) {
        total += sentence_distance(&pair[0], &pair[1], encoder)?;
    }
    Ok(Some(total / (sentences.len() - 1) as f64))
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Input(format!(
            "pearson inputs differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Input("pearson needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
