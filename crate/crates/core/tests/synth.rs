use iclscope::attnratio::{aggregate_heads, attention_ratio, Aggregation, TokenIndexSet};
use iclscope::repgeom::{
    cosine_similarity_matrix, hypothesis_alignment, hypothesis_from_values, standardize, Pooling,
    PromptVector, TokenSelection,
};
use iclscope::stats::CorrelationMethod;
use iclscope::synth::{
    class_directions, synth_attention, synth_embeddings, tokenize, PlantedAttentionSpec,
    PlantedEmbeddingSpec,
};
use iclscope::tensorstore::Span;
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn labels(n: usize, k: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{}", i % k)).collect()
}

fn spec(signal: f64, noise: f64, seed: u64) -> PlantedEmbeddingSpec {
    PlantedEmbeddingSpec {
        labels: labels(100, 5),
        d: 16,
        signal,
        noise,
        seed,
    }
}

fn vectors(x: &Array2<f64>) -> Vec<PromptVector> {
    x.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| PromptVector {
            record_id: format!("p{i:03}"),
            layer: 0,
            vector: row.to_vec(),
            pooling: Pooling::Mean,
            selection: TokenSelection::AllPromptTokens,
        })
        .collect()
}

fn alignment(x: &Array2<f64>, y: &[String]) -> f64 {
    let v = standardize(&vectors(x)).unwrap();
    let m = cosine_similarity_matrix(&v).unwrap();
    let h = hypothesis_from_values(m.order.clone(), y);
    hypothesis_alignment(&m, &h, CorrelationMethod::Pearson).unwrap()
}

#[test]
fn embeddings_are_deterministic() {
    let a = synth_embeddings(&spec(2.0, 1.0, 3)).unwrap();
    let b = synth_embeddings(&spec(2.0, 1.0, 3)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synth_embeddings(&spec(2.0, 1.0, 4)).unwrap());
}

#[test]
fn alignment_grows_with_signal() {
    let grid = [0.0, 0.5, 1.0, 2.0, 5.0];
    let y = labels(100, 5);
    let curve: Vec<f64> = grid
        .iter()
        .map(|&s| {
            (0..5)
                .map(|seed| alignment(&synth_embeddings(&spec(s, 1.0, seed)).unwrap(), &y))
                .sum::<f64>()
                / 5.0
        })
        .collect();
    for pair in curve.windows(2) {
        assert!(pair[1] > pair[0], "{curve:?}");
    }
}

#[test]
fn noiseless_same_class_rows_have_cosine_one() {
    let x = synth_embeddings(&spec(3.0, 0.0, 1)).unwrap();
    let m = cosine_similarity_matrix(&vectors(&x)).unwrap();
    let y = labels(100, 5);
    for i in 0..100 {
        for j in 0..100 {
            if y[i] == y[j] {
                assert!((m.values[[i, j]] - 1.0).abs() < 1e-12);
            } else {
                assert!(m.values[[i, j]].abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_signal_gives_no_alignment() {
    let y = labels(100, 5);
    for seed in 0..5 {
        let a = alignment(&synth_embeddings(&spec(0.0, 1.0, seed)).unwrap(), &y);
        assert!((-0.1..=0.1).contains(&a), "seed {seed}: {a}");
    }
}

#[test]
fn directions_are_orthonormal_up_to_d() {
    let y = labels(10, 4);
    let dirs = class_directions(&y, 6, 2);
    let vs: Vec<&Vec<f64>> = dirs.values().collect();
    for (i, a) in vs.iter().enumerate() {
        for (j, b) in vs.iter().enumerate() {
            let dot: f64 = a.iter().zip(b.iter()).map(|(p, q)| p * q).sum();
            assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-12);
        }
    }
}

fn attention_spec(mass: f64, jitter: f64, seed: u64) -> PlantedAttentionSpec {
    PlantedAttentionSpec {
        n_total: 10,
        response: Span::new(8, 10),
        focus: Span::new(0, 2),
        focus_mass: mass,
        heads: 4,
        jitter,
        seed,
        record_id: "r".into(),
        layer: 0,
    }
}

fn set(indices: std::ops::Range<usize>) -> TokenIndexSet {
    TokenIndexSet {
        record_id: "r".into(),
        source: "t".into(),
        indices: indices.collect(),
    }
}

fn ratio(mass: f64, jitter: f64, seed: u64, agg: Aggregation) -> f64 {
    let block = synth_attention(&attention_spec(mass, jitter, seed)).unwrap();
    attention_ratio(
        &aggregate_heads(&block, agg),
        &set(8..10),
        &set(0..2),
        &set(2..8),
    )
    .unwrap()
}

#[test]
fn planted_mass_gives_expected_ratio() {
    // 0.8 over 2 tokens against 0.2 over 8 tokens.
    for seed in 0..20 {
        let r = ratio(0.8, 0.01, seed, Aggregation::Mean);
        assert!((r / 16.0 - 1.0).abs() < 0.05, "{r}");
    }
    // Uniform plant: 0.2 over 2 tokens matches 0.8 over 8.
    for agg in [Aggregation::Mean, Aggregation::Max] {
        assert!((ratio(0.2, 0.0, 0, agg) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn invalid_attention_specs_are_rejected() {
    let mut s = attention_spec(0.8, 0.0, 0);
    s.focus = Span::new(7, 9);
    assert!(synth_attention(&s).is_err());
    assert!(synth_attention(&attention_spec(1.0, 0.0, 0)).is_err());
    assert!(synth_attention(&attention_spec(0.5, 1.0, 0)).is_err());
}

#[test]
fn tokenizer_covers_words_and_punctuation() {
    let t = tokenize("Bob is  here.", 3);
    let texts: Vec<&str> = t.iter().map(|t| t.text.as_str()).collect();
    assert_eq!(texts, ["Bob", "is", "here", "."]);
    assert_eq!((t[0].start, t[0].end), (3, 6));
    assert_eq!((t[3].start, t[3].end), (15, 16));
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn attention_rows_are_distributions(mass in 0.01f64..0.99, jitter in 0.0f64..0.5, seed in any::<u64>()) {
        let block = synth_attention(&attention_spec(mass, jitter, seed)).unwrap();
        for s in block.tensor.sum_axis(Axis(2)).iter() {
            prop_assert!((f64::from(*s) - 1.0).abs() < 1e-5);
        }
        prop_assert!(block.tensor.iter().all(|v| *v >= 0.0));
        let again = synth_attention(&attention_spec(mass, jitter, seed)).unwrap();
        prop_assert_eq!(block, again);
    }

    #[test]
    fn jitter_free_ratio_is_closed_form(mass in 0.01f64..0.99) {
        let expected = (mass / 2.0) / ((1.0 - mass) / 8.0);
        let r = ratio(mass, 0.0, 0, Aggregation::Mean);
        prop_assert!((r / expected - 1.0).abs() < 1e-5);
    }

    #[test]
    fn embedding_rows_follow_labels(seed in any::<u64>(), k in 2usize..6) {
        let y = labels(12, k);
        let x = synth_embeddings(&PlantedEmbeddingSpec { labels: y.clone(), d: 8, signal: 4.0, noise: 0.0, seed }).unwrap();
        let dirs = class_directions(&y, 8, seed);
        for (row, label) in x.rows().into_iter().zip(&y) {
            for (a, b) in row.iter().zip(&dirs[label]) {
                prop_assert!((a - 4.0 * b).abs() < 1e-12);
            }
        }
    }
}
