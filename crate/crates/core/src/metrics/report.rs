use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{copy_rate, redundancy, rouge1, rougeL, rsd, token_prf, SentenceEncoder};
use crate::error::Result;
use crate::retrieval::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rsd: Option<f64>,
    pub copy_rate: f64,
    pub redundancy: f64,
    pub rouge1_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,
    pub gen_time_seconds: f64,
    pub tokens_per_second: f64,
}

impl AnswerMetrics {
    pub fn compute(
        answer: &str,
        gold: &str,
        context: &str,
        encoder: &dyn SentenceEncoder,
        gen_time_seconds: f64,
        max_new_tokens: usize,
    ) -> Result<Self> {
        let prf = token_prf(answer, gold);
        let tokens_per_second = if gen_time_seconds > 0.0 {
            max_new_tokens as f64 / gen_time_seconds
        } else {
            0.0
        };
        Ok(AnswerMetrics {
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            rsd: rsd(answer, encoder)?,
            copy_rate: copy_rate(answer, context),
            redundancy: redundancy(answer),
            rouge1_f: rouge1(answer, gold).f1,
            rouge_l_f: rougeL(answer, gold).f1,
            gen_time_seconds,
            tokens_per_second,
        })
    }
}

/// One generated answer with its inputs and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub strategy: String,
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub answer: String,
    pub context: String,
    pub retrieved: Vec<String>,
    #[serde(default)]
    pub max_new_tokens: usize,
    /// Present when generation failed; metrics are then absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<AnswerMetrics>,
}

pub fn write_answer_records(path: &Path, records: &[AnswerRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_answer_records(path: &Path) -> Result<Vec<AnswerRecord>> {
    read_jsonl(path)
}

/// Means over the scored answers of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub n_answers: usize,
    pub n_failed: usize,
    /// Answers with fewer than two sentences, left out of the RSD mean.
    pub rsd_excluded: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rsd: Option<f64>,
    pub copy_rate: f64,
    pub redundancy: f64,
    pub rouge1_f: f64,
    pub rouge_l_f: f64,
    pub avg_time_s: f64,
    pub tokens_per_s: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl StrategySummary {
    pub fn from_records<'a>(strategy: &str, records: impl IntoIterator<Item = &'a AnswerRecord>) -> Self {
        let mut scored = Vec::new();
        let mut new_tokens = Vec::new();
        let mut n_failed = 0;
        for r in records {
            match &r.metrics {
                Some(m) => {
                    scored.push(m);
                    new_tokens.push(r.max_new_tokens as f64);
                }
                None => n_failed += 1,
            }
        }
        let avg = |f: fn(&AnswerMetrics) -> f64| mean(scored.iter().map(|m| f(m))).unwrap_or(0.0);
        let avg_time_s = avg(|m| m.gen_time_seconds);
        let tokens_per_s = match mean(new_tokens.into_iter()) {
            Some(n) if avg_time_s > 0.0 => n / avg_time_s,
            _ => 0.0,
        };
        StrategySummary {
            strategy: strategy.to_string(),
            n_answers: scored.len(),
            n_failed,
            rsd_excluded: scored.iter().filter(|m| m.rsd.is_none()).count(),
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
            rsd: mean(scored.iter().filter_map(|m| m.rsd)),
            copy_rate: avg(|m| m.copy_rate),
            redundancy: avg(|m| m.redundancy),
            rouge1_f: avg(|m| m.rouge1_f),
            rouge_l_f: avg(|m| m.rouge_l_f),
            avg_time_s,
            tokens_per_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub summaries: Vec<StrategySummary>,
}

impl MetricReport {
    /// Groups records by strategy, in order of first appearance.
    pub fn from_records(records: &[AnswerRecord]) -> Self {
        let mut order: Vec<&str> = Vec::new();
        for r in records {
            if !order.contains(&r.strategy.as_str()) {
                order.push(&r.strategy);
            }
        }
        let summaries = order
            .into_iter()
            .map(|s| StrategySummary::from_records(s, records.iter().filter(|r| r.strategy == s)))
            .collect();
        MetricReport { summaries }
    }

    pub fn get(&self, strategy: &str) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    strategy: &'a str,
    precision: f64,
    recall: f64,
    f1: f64,
    rsd: Option<f64>,
    copy_rate: f64,
    redundancy: f64,
    rouge1_f: f64,
    #[serde(rename = "rougeL_f")]
    rouge_l_f: f64,
    avg_time_s: f64,
    tokens_per_s: f64,
}

pub fn write_summary_csv(path: &Path, report: &MetricReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &report.summaries {
        w.serialize(CsvRow {
            strategy: &s.strategy,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            rsd: s.rsd,
            copy_rate: s.copy_rate,
            redundancy: s.redundancy,
            rouge1_f: s.rouge1_f,
            rouge_l_f: s.rouge_l_f,
            avg_time_s: s.avg_time_s,
            tokens_per_s: s.tokens_per_s,
        })
        .map_err(|e| crate::Error::Input(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| crate::Error::Input(format!("csv: {e}")))?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::HashSentenceEncoder;

    fn record(strategy: &str, answer: &str) -> AnswerRecord {
        let enc = HashSentenceEncoder::default();
        AnswerRecord {
            strategy: strategy.into(),
            id: answer.into(),
            question: "q".into(),
            gold_answer: "the tower was built in 1889.".into(),
            answer: answer.into(),
            context: "the tower was built in 1889. it is tall.".into(),
            retrieved: vec!["d0#0".into()],
            max_new_tokens: 8,
            error: None,
            metrics: Some(AnswerMetrics::compute(answer, "the tower was built in 1889.", "the tower was built in 1889.", &enc, 0.5, 8).unwrap()),
        }
    }

    #[test]
    fn summaries_are_means_of_records() {
        let mut records = vec![
            record("spread", "the tower was built in 1889. it is tall."),
            record("random", "tall tall tall."),
            record("spread", "built in 1889."),
        ];
        records.push(AnswerRecord {
            error: Some("boom".into()),
            metrics: None,
            ..record("random", "x")
        });
        let report = MetricReport::from_records(&records);
        assert_eq!(report.summaries.len(), 2);
        let s = report.get("spread").unwrap();
        assert_eq!(s.n_answers, 2);
        assert_eq!(s.rsd_excluded, 1);
        let m0 = records[0].metrics.as_ref().unwrap();
        let m2 = records[2].metrics.as_ref().unwrap();
        assert!((s.precision - (m0.precision + m2.precision) / 2.0).abs() < 1e-12);
        assert_eq!(s.rsd, m0.rsd);
        let r = report.get("random").unwrap();
        assert_eq!((r.n_answers, r.n_failed), (1, 1));
        assert!((s.tokens_per_s * s.avg_time_s - 8.0).abs() < 1e-9);
    }

    #[test]
    fn csv_has_the_expected_columns() {
        let report = MetricReport::from_records(&[record("random", "a b.")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary_csv(&path, &report).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "strategy,precision,recall,f1,rsd,copy_rate,redundancy,rouge1_f,rougeL_f,avg_time_s,tokens_per_s"
        );
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let records = vec![record("spread", "a b. c d.")];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("answers.jsonl");
        write_answer_records(&path, &records).unwrap();
        assert_eq!(read_answer_records(&path).unwrap(), records);
    }
}
