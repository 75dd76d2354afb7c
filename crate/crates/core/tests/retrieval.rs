use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spread_rag::error::Error;
use spread_rag::retrieval::{
    chunk_document, Document, Embedder, EmbedderConfig, EmbedderKind, HashEmbedder, RetrievalIndex,
};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Seeded pseudo-random vector per text.
struct RandomEmbedder;

impl Embedder for RandomEmbedder {
    fn id(&self) -> String {
        "random-8".into()
    }
    fn dim(&self) -> usize {
        8
    }
    fn embed(&self, texts: &[String]) -> spread_rag::Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|t| {
                let seed = t.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b)));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()
            })
            .collect())
    }
}

proptest! {
    #[test]
    fn chunking_is_lossless(text in "\\PC{0,300}", size in 1usize..64) {
        let chunks = chunk_document("d", &text, size).unwrap();
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        prop_assert_eq!(joined, text);
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.chunk_index, i);
            let n = c.text.chars().count();
            prop_assert!(n >= 1 && n <= size);
            if i + 1 < chunks.len() {
                prop_assert_eq!(n, size);
            }
        }
    }

    #[test]
    fn ranking_matches_brute_force(
        docs in prop::collection::vec("[a-z ]{1,60}", 1..40),
        query in "[a-z]{1,12}",
        chunk_size in 1usize..20,
        top_k in 1usize..50,
    ) {
        let docs: Vec<Document> = docs
            .into_iter()
            .enumerate()
            .map(|(i, text)| Document { doc_id: format!("d{i:03}"), text })
            .collect();
        let e = RandomEmbedder;
        let index = RetrievalIndex::build(&docs, chunk_size, &e).unwrap();
        let q = e.embed(&[query]).unwrap().remove(0);
        let got = index.search(&q, top_k).unwrap();
        let mut want: Vec<(usize, f64)> = index
            .chunks()
            .iter()
            .enumerate()
            .map(|(i, c)| (i, cosine(&q, &c.embedding)))
            .collect();
        want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        want.truncate(top_k);
        prop_assert_eq!(got.len(), want.len());
        for (g, (i, s)) in got.iter().zip(&want) {
            let c = &index.chunks()[*i];
            prop_assert!((g.score - s).abs() < 1e-9);
            if (g.doc_id.as_str(), g.chunk_index) != (c.doc_id.as_str(), c.chunk_index) {
                // Only acceptable when the two scores are tied within rounding.
                let other = index.chunks().iter().position(|x| x.doc_id == g.doc_id && x.chunk_index == g.chunk_index).unwrap();
                prop_assert!((cosine(&q, &index.chunks()[other].embedding) - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn every_chunk_retrieves_itself() {
    let docs: Vec<Document> = (0..50)
        .map(|i| Document {
            doc_id: format!("doc{i}"),
            text: format!("entity{i} holds value{} and relation{} at site{}", i * 7, i % 5, i * 3),
        })
        .collect();
    let e = HashEmbedder::new(4096).unwrap();
    let index = RetrievalIndex::build(&docs, 2000, &e).unwrap();
    for d in &docs {
        let hits = index.retrieve(&e, &d.text, 1).unwrap();
        assert_eq!(hits[0].doc_id, d.doc_id);
    }
}

/// Serves one scripted reply per connection and records each request body.
fn mock_server(replies: Vec<(u16, String, u64)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&bodies);
    thread::spawn(move || {
        for (status, body, delay_ms) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            seen.lock().unwrap().push(String::from_utf8(req).unwrap());
            thread::sleep(Duration::from_millis(delay_ms));
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, bodies)
}

fn remote(url: &str, dim: usize, timeout_ms: u64) -> Box<dyn Embedder> {
    EmbedderConfig {
        kind: EmbedderKind::Remote,
        dim,
        endpoint: Some(url.to_string()),
        timeout_ms,
        retries: 2,
        batch_size: 2,
    }
    .build()
    .unwrap()
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("text {i}")).collect()
}

#[test]
fn remote_embedder_batches_and_retries() {
    let ok2 = r#"{"embeddings": [[1.0, 0.0], [0.0, 1.0]]}"#.to_string();
    let ok1 = r#"{"embeddings": [[0.5, 0.5]]}"#.to_string();
    let (url, bodies) = mock_server(vec![
        (200, ok2, 0),
        (503, "busy".into(), 0),
        (200, ok1, 0),
    ]);
    let e = remote(&url, 2, 5000);
    let v = e.embed(&texts(3)).unwrap();
    assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
    let bodies = bodies.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    assert_eq!(bodies[0], r#"{"texts":["text 0","text 1"]}"#);
    assert_eq!(bodies[2], r#"{"texts":["text 2"]}"#);
}

#[test]
fn remote_embedder_failures_are_typed() {
    let (url, _) = mock_server(vec![(400, "bad".into(), 0)]);
    assert!(matches!(remote(&url, 2, 5000).embed(&texts(1)), Err(Error::EmbedService { batch: 0, .. })));

    let (url, _) = mock_server(vec![(200, "{not json".into(), 0)]);
    assert!(matches!(remote(&url, 2, 5000).embed(&texts(1)), Err(Error::EmbedMalformed { .. })));

    let (url, _) = mock_server(vec![(200, r#"{"embeddings": [[1.0, 2.0, 3.0]]}"#.into(), 0)]);
    assert!(matches!(
        remote(&url, 2, 5000).embed(&texts(1)),
        Err(Error::EmbedDimension { expected: 2, actual: 3, .. })
    ));

    let slow = r#"{"embeddings": [[1.0, 0.0]]}"#.to_string();
    let (url, _) = mock_server(vec![(200, slow.clone(), 600), (200, slow.clone(), 600), (200, slow, 600)]);
    assert!(matches!(remote(&url, 2, 100).embed(&texts(1)), Err(Error::EmbedTimeout { batch: 0 })));
}
