//! JSON description of a table-oracle model, plus the planted
//! relevance-versus-confidence fixture used by the mechanism checks.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TableOracleModel;
use crate::tokenizer::{TokenId, Tokenizer, MASK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RowKey {
    Token { token: String },
    Position { position: usize, token: String },
    /// Slot `from_end` positions before the last, in sequences ending with `tail`.
    Tail { tail: Vec<String>, from_end: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub key: RowKey,
    /// Sparse logits; tokens not listed get `OracleFixture::floor_logit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    /// Full vocabulary in id order, special tokens first.
    pub vocab: Vec<String>,
    pub hidden_dim: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub floor_logit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_hidden: Option<Vec<f64>>,
    #[serde(default)]
    pub rows: Vec<FixtureRow>,
}

impl OracleFixture {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::from_tokens(self.vocab.iter().cloned())
    }

    pub fn build(&self) -> Result<(TableOracleModel, Tokenizer)> {
        let tok = self.tokenizer();
        let specials = Tokenizer::fit(std::iter::empty::<&str>());
        let distinct: std::collections::HashSet<&String> = self.vocab.iter().collect();
        if !self.vocab.starts_with(specials.tokens()) || distinct.len() != self.vocab.len() {
            return Err(Error::Config(
                "fixture vocabulary must list the special tokens first and no duplicates".into(),
            ));
        }
        let vocab_size = tok.vocab_size();
        let id = |s: &str| {
            tok.id(s)
                .ok_or_else(|| Error::Config(format!("fixture token {s:?} is not in the vocabulary")))
        };
        let mut model = TableOracleModel::new(vocab_size, self.hidden_dim, self.max_seq_len, MASK)?;
        model.set_default_logits(vec![self.floor_logit; vocab_size])?;
        if let Some(h) = &self.default_hidden {
            model.set_default_hidden(h.clone())?;
        }
        for row in &self.rows {
            let logits = match &row.logits {
                Some(sparse) => {
                    let mut dense = vec![self.floor_logit; vocab_size];
                    for (t, v) in sparse {
                        dense[id(t)? as usize] = *v;
                    }
                    Some(dense)
                }
                None => None,
            };
            match &row.key {
                RowKey::Token { token } => {
                    let t = id(token)?;
                    if let Some(l) = logits {
                        model.set_token_logits(t, l)?;
                    }
                    if let Some(h) = &row.hidden {
                        model.set_token_hidden(t, h.clone())?;
                    }
                }
                RowKey::Position { position, token } => {
                    let t = id(token)?;
                    if let Some(l) = logits {
                        model.set_position_logits(*position, t, l)?;
                    }
                    if let Some(h) = &row.hidden {
                        model.set_position_hidden(*position, t, h.clone())?;
                    }
                }
                RowKey::Tail { tail, from_end } => {
                    let ids = tail.iter().map(|t| id(t)).collect::<Result<Vec<TokenId>>>()?;
                    if let Some(l) = logits {
                        model.set_tail_logits(&ids, *from_end, l)?;
                    }
                    if let Some(h) = &row.hidden {
                        model.set_tail_hidden(&ids, *from_end, h.clone())?;
                    }
                }
            }
        }
        Ok((model, tok))
    }
}

/// Two-slot answer: the first slot is query-aligned and holds the answer,
/// the second is more confident and holds a distractor.
///
/// On the all-masked canvas the answer slot predicts `answer` with a modest
/// margin and a hidden state parallel to every query token; the distractor
/// slot predicts `distractor` with a larger margin and an orthogonal hidden
/// state. Committing the answer first makes the other slot predict EOS;
/// committing the distractor first makes the answer slot echo a second
/// distractor word. Generate with `max_new_tokens = diffusion_steps = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFixture {
    pub fixture: OracleFixture,
    pub answer: String,
    pub distractors: [String; 2],
}

pub fn planted_fixture(
    words: &[&str],
    answer: &str,
    distractors: [&str; 2],
    max_seq_len: usize,
    variant: u64,
) -> Result<PlantedFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(variant);
    let mut vocab = Tokenizer::fit(std::iter::empty::<&str>()).tokens().to_vec();
    for w in words.iter().chain([&answer]).chain(distractors.iter()) {
        if !vocab.iter().any(|v| v == w) {
            vocab.push(w.to_string());
        }
    }
    let hidden_dim = 8;
    let query_dir: Vec<f64> = (0..hidden_dim).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let noisy = |rng: &mut ChaCha8Rng, base: usize| -> Vec<f64> {
        (0..hidden_dim)
            .map(|i| if i == base { 1.0 } else { rng.gen_range(-0.2..0.2) })
            .collect()
    };
    let answer_hidden = noisy(&mut rng, 0);
    let distractor_axis = 1 + rng.gen_range(0..hidden_dim - 1);
    let distractor_hidden = noisy(&mut rng, distractor_axis);
    let answer_margin = rng.gen_range(1.0..3.0);
    let distractor_margin = answer_margin + rng.gen_range(1.0..5.0);
    // Offsets from the end of the canvas: the answer slot precedes the distractor slot.
    let (a_off, d_off) = (1, 0);
    let m = MASK_PIECE.to_string();
    let eos = EOS_PIECE.to_string();
    let tail = |a: &str, d: &str| vec![a.to_string(), d.to_string()];
    let logits = |t: &str, v: f64| Some(BTreeMap::from([(t.to_string(), v)]));
    let rows = vec![
        FixtureRow {
            key: RowKey::Tail { tail: tail(&m, &m), from_end: a_off },
            logits: logits(answer, answer_margin),
            hidden: Some(answer_hidden),
        },
        FixtureRow {
            key: RowKey::Tail { tail: tail(&m, &m), from_end: d_off },
            logits: logits(distractors[0], distractor_margin),
            hidden: Some(distractor_hidden),
        },
        FixtureRow {
            key: RowKey::Tail { tail: tail(answer, &m), from_end: d_off },
            logits: logits(&eos, 10.0),
            hidden: None,
        },
        FixtureRow {
            key: RowKey::Tail { tail: tail(&m, distractors[0]), from_end: a_off },
            logits: logits(distractors[1], 10.0),
            hidden: None,
        },
    ];
    Ok(PlantedFixture {
        fixture: OracleFixture {
            vocab,
            hidden_dim,
            max_seq_len,
            floor_logit: 0.0,
            default_hidden: Some(query_dir),
            rows,
        },
        answer: answer.to_string(),
        distractors: distractors.map(str::to_string),
    })
}

const MASK_PIECE: &str = "[MASK]";
const EOS_PIECE: &str = "[EOS]";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DenoisingModel;
    use crate::tokenizer::EOS;

    #[test]
    fn special_pieces_match_the_tokenizer() {
        let tok = Tokenizer::fit(["x"]);
        assert_eq!(tok.piece(MASK).unwrap(), MASK_PIECE);
        assert_eq!(tok.piece(EOS).unwrap(), EOS_PIECE);
    }

    #[test]
    fn json_round_trip_and_build() {
        let p = planted_fixture(&["what", "does", "zorp", "like"], "mud", ["sand", "eats"], 64, 3).unwrap();
        let text = serde_json::to_string(&p.fixture).unwrap();
        let back: OracleFixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p.fixture);
        let (model, tok) = back.build().unwrap();
        assert_eq!(model.vocab_size(), tok.vocab_size());
        let mut seq = tok.encode("what does zorp like");
        seq.extend([MASK, MASK]);
        let out = model.forward(&seq).unwrap();
        let n = seq.len();
        assert_eq!(crate::sampling::argmax(out.logit_row(n - 2)) as TokenId, tok.id("mud").unwrap());
        assert_eq!(crate::sampling::argmax(out.logit_row(n - 1)) as TokenId, tok.id("sand").unwrap());
    }

    #[test]
    fn unknown_tokens_are_config_errors() {
        let mut p = planted_fixture(&["a"], "b", ["c", "d"], 16, 0).unwrap().fixture;
        p.rows[0].logits = Some(BTreeMap::from([("nope".to_string(), 1.0)]));
        assert!(matches!(p.build(), Err(Error::Config(_))));
    }
}
