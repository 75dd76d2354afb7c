use ndarray::Array2;
use proptest::prelude::*;
use spread_rag::metrics::{
    copy_rate, pearson, redundancy, rouge1, rougeL, rsd, token_prf, HashSentenceEncoder,
};
use spread_rag::model::ForwardOutput;
use spread_rag::relevance::{relevance_scores, select_spread, sigmoid, QueryVector};

fn sentence() -> impl Strategy<Value = String> {
    "[a-f]{1,3}( [a-f]{1,3}){0,5}"
}

proptest! {
    #[test]
    fn prf_is_bounded_and_f1_is_harmonic(pred in sentence(), gold in sentence()) {
        let p = token_prf(&pred, &gold);
        for v in [p.precision, p.recall, p.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if p.precision + p.recall > 0.0 {
            let h = 2.0 * p.precision * p.recall / (p.precision + p.recall);
            prop_assert!((p.f1 - h).abs() < 1e-12);
        }
        let swapped = token_prf(&gold, &pred);
        prop_assert!((swapped.precision - p.recall).abs() < 1e-12);
    }

    #[test]
    fn identical_answers_score_perfectly(s in sentence()) {
        let p = token_prf(&s, &s);
        prop_assert_eq!((p.precision, p.recall), (1.0, 1.0));
        prop_assert_eq!(rougeL(&s, &s).f1, 1.0);
        prop_assert_eq!(copy_rate(&s, &s), 1.0);
    }

    #[test]
    fn longest_subsequence_never_beats_unigram_overlap(pred in sentence(), gold in sentence()) {
        prop_assert!(rougeL(&pred, &gold).f1 <= rouge1(&pred, &gold).f1 + 1e-12);
    }

    #[test]
    fn redundancy_is_a_fraction(s in sentence()) {
        let r = redundancy(&s);
        prop_assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn drift_is_a_mean_cosine_distance(sents in prop::collection::vec(sentence(), 1..5)) {
        let answer = sents.iter().map(|s| format!("{s}.")).collect::<Vec<_>>().join(" ");
        let enc = HashSentenceEncoder::default();
        match rsd(&answer, &enc).unwrap() {
            None => prop_assert!(sents.len() < 2),
            Some(d) => prop_assert!((0.0..=2.0).contains(&d)),
        }
    }

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20),
        a in 0.1f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let (Ok(r), Ok(r2)) = (pearson(&xs, &ys), pearson(&ys, &xs)) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - r2).abs() < 1e-9);
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson(&scaled, &ys).unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn sigmoid_is_monotone(x in -50.0f64..50.0, dx in 1e-6f64..10.0) {
        prop_assert!(sigmoid(x) < sigmoid(x + dx) || sigmoid(x) == 1.0);
        prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relevance_ignores_vector_scale(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 2..12),
        q in prop::collection::vec(-1.0f64..1.0, 4),
        scale in 0.01f64..100.0,
        k in 1usize..12,
    ) {
        prop_assume!(rows.iter().all(|r| r.iter().any(|v| v.abs() > 1e-3)));
        prop_assume!(q.iter().any(|v| v.abs() > 1e-3));
        let n = rows.len();
        let k = k.min(n);
        let hidden = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j]);
        let out = ForwardOutput::new(Array2::zeros((n, 3)), hidden.clone()).unwrap();
        let big = ForwardOutput::new(Array2::zeros((n, 3)), hidden * scale).unwrap();
        let masked: Vec<usize> = (0..n).collect();
        let qv = QueryVector::new(q.clone()).unwrap();
        let qs = QueryVector::new(q.iter().map(|v| v * scale).collect()).unwrap();
        let a = relevance_scores(&out, &masked, &qv).unwrap();
        let b = relevance_scores(&big, &masked, &qs).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert!((x.relevance - y.relevance).abs() < 1e-9);
            prop_assert!(x.relevance > 0.0 && x.relevance < 1.0);
        }
        let (sa, sb) = (select_spread(&a, k).unwrap(), select_spread(&b, k).unwrap());
        let close_tie = a.entries.iter().any(|x| a.entries.iter().any(|y| x.position != y.position && (x.relevance - y.relevance).abs() < 1e-9));
        if !close_tie {
            prop_assert_eq!(sa.positions, sb.positions);
        }
    }
}
