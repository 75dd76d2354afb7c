//! Synthetic question-answering corpora with planted distractors.
//!
//! Every document centres on one entity. Its sentences have the shape
//! `the <entity> <relation> <value>.`; on-topic sentences use the document's
//! entity, distractor sentences use a companion entity that never appears in
//! an evaluation question. Each question `what does <entity> <relation>?` is answered by
//! exactly one sentence in the corpus.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::QARecord;
use crate::error::{Error, Result};
use crate::retrieval::{write_corpus, write_jsonl, Document};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_documents: usize,
    pub sentences_per_doc: usize,
    pub n_queries: usize,
    pub distractor_ratio: f64,
    /// Number of distinct content words.
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_documents: 240,
            sentences_per_doc: 6,
            n_queries: 200,
            distractor_ratio: 0.7,
            vocab_size: 560,
            seed: 7,
        }
    }
}

/// One sentence of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub doc_id: String,
    pub sentence_index: usize,
    pub entity: String,
    pub relation: String,
    pub value: String,
    pub distractor: bool,
}

impl Fact {
    pub fn sentence(&self) -> String {
        format!("the {} {} {}.", self.entity, self.relation, self.value)
    }

    pub fn question(&self) -> String {
        format!("what does {} {}?", self.entity, self.relation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub id: String,
    pub doc_id: String,
    pub sentence_index: usize,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
    /// Evaluation questions, one per planted answer sentence.
    pub dataset: Vec<QARecord>,
    pub answer_key: Vec<AnswerKeyEntry>,
    /// Questions about every sentence that is not a planted answer. Their
    /// gold answers continue with the other sentences about the same entity.
    pub training: Vec<QARecord>,
    pub facts: Vec<Fact>,
}

const FUNCTION_WORDS: [&str; 3] = ["the", "what", "does"];

fn pseudo_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    const ONSETS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut seen: HashSet<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(ONSETS[rng.gen_range(0..ONSETS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl SyntheticSpec {
    fn n_distractors(&self) -> usize {
        (self.distractor_ratio * (self.sentences_per_doc - 1) as f64).round() as usize
    }

    fn n_relations(&self) -> usize {
        (self.sentences_per_doc + 4).max(8)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Generation(m));
        if self.n_documents == 0 || self.sentences_per_doc == 0 {
            return fail("n_documents and sentences_per_doc must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_ratio) {
            return fail(format!("distractor_ratio {} outside [0, 1]", self.distractor_ratio));
        }
        if self.n_queries > self.n_documents {
            return fail(format!(
                "{} queries need at least as many documents (have {})",
                self.n_queries, self.n_documents
            ));
        }
        let needed = 2 * self.n_documents + self.n_relations() + 8;
        if self.vocab_size < needed {
            return fail(format!(
                "vocab_size {} too small to separate entities, relations and values (need {needed})",
                self.vocab_size
            ));
        }
        Ok(())
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words = pseudo_words(spec.vocab_size, &mut rng);
    let n_rel = spec.n_relations();
    let (entities, rest) = words.split_at(2 * spec.n_documents);
    let (relations, values) = rest.split_at(n_rel);
    let (primaries, companions) = entities.split_at(spec.n_documents);

    let n_distract = spec.n_distractors();
    let mut documents = Vec::with_capacity(spec.n_documents);
    let mut facts = Vec::new();
    let mut doc_facts: Vec<Vec<Fact>> = Vec::new();
    for d in 0..spec.n_documents {
        let doc_id = format!("doc{d:04}");
        let mut rels: Vec<&String> = relations.iter().collect();
        rels.shuffle(&mut rng);
        // Companions reuse the primary entity's relations so that every
        // question has a near-miss sentence in the same document.
        let mut companion_rels: Vec<&String> = rels[..n_distract.max(1)].to_vec();
        companion_rels.shuffle(&mut rng);
        let mut kinds: Vec<bool> = (0..spec.sentences_per_doc).map(|i| i < n_distract).collect();
        kinds.shuffle(&mut rng);
        let (mut on, mut off) = (0, 0);
        let mut sentences = Vec::with_capacity(spec.sentences_per_doc);
        for (i, &distractor) in kinds.iter().enumerate() {
            let (entity, relation) = if distractor {
                off += 1;
                (&companions[d], companion_rels[off - 1])
            } else {
                on += 1;
                (&primaries[d], rels[on - 1])
            };
            sentences.push(Fact {
                doc_id: doc_id.clone(),
                sentence_index: i,
                entity: entity.clone(),
                relation: relation.clone(),
                value: values[rng.gen_range(0..values.len())].clone(),
                distractor,
            });
        }
        let text = sentences
            .iter()
            .map(Fact::sentence)
            .collect::<Vec<_>>()
            .join(" ");
        documents.push(Document { doc_id, text });
        facts.extend(sentences.iter().cloned());
        doc_facts.push(sentences);
    }

    let mut query_docs: Vec<usize> = (0..spec.n_documents).collect();
    query_docs.shuffle(&mut rng);
    query_docs.truncate(spec.n_queries);
    query_docs.sort_unstable();
    let mut planted: HashSet<(usize, usize)> = HashSet::new();
    let mut dataset = Vec::with_capacity(spec.n_queries);
    let mut answer_key = Vec::with_capacity(spec.n_queries);
    for (qi, &d) in query_docs.iter().enumerate() {
        let on_topic: Vec<&Fact> = doc_facts[d].iter().filter(|f| !f.distractor).collect();
        let fact = on_topic[rng.gen_range(0..on_topic.len())];
        planted.insert((d, fact.sentence_index));
        let id = format!("q{qi:04}");
        dataset.push(QARecord {
            id: id.clone(),
            question: fact.question(),
            gold_answer: fact.sentence(),
            gold_doc_ids: vec![fact.doc_id.clone()],
        });
        answer_key.push(AnswerKeyEntry {
            id,
            doc_id: fact.doc_id.clone(),
            sentence_index: fact.sentence_index,
            sentence: fact.sentence(),
        });
    }

    let mut training = Vec::new();
    for (d, sentences) in doc_facts.iter().enumerate() {
        for f in sentences {
            if planted.contains(&(d, f.sentence_index)) {
                continue;
            }
            training.push(QARecord {
                id: format!("t{:04}-{}", d, f.sentence_index),
                question: f.question(),
                gold_answer: elaborated_answer(f, sentences),
                gold_doc_ids: vec![f.doc_id.clone()],
            });
        }
    }

    Ok(SyntheticCorpus {
        documents,
        dataset,
        answer_key,
        training,
        facts,
    })
}

/// The asked sentence followed by the document's other sentences about the
/// same entity, in document order.
fn elaborated_answer(fact: &Fact, sentences: &[Fact]) -> String {
    std::iter::once(fact)
        .chain(sentences.iter().filter(|f| f.entity == fact.entity && f.sentence_index != fact.sentence_index))
        .map(Fact::sentence)
        .collect::<Vec<_>>()
        .join(" ")
}

impl SyntheticCorpus {
    /// Writes `corpus.jsonl`, `dataset.jsonl`, `answer_key.jsonl` and
    /// `train.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_corpus(&dir.join("corpus.jsonl"), &self.documents)?;
        write_jsonl(&dir.join("dataset.jsonl"), &self.dataset)?;
        write_jsonl(&dir.join("answer_key.jsonl"), &self.answer_key)?;
        write_jsonl(&dir.join("train.jsonl"), &self.training)?;
        Ok(())
    }
}
