use std::collections::BTreeSet;

use ndarray::Array3;
use proptest::prelude::*;

use jestcap::corpus::{
    captions_per_image_stats, emotion_distribution, grammar_patterns, KeywordEmotionClassifier,
    PosLexicon, PosTag,
};
use jestcap::curate::{apply_filters, FilterSpec, FilterStage};
use jestcap::metrics::classifier::logistic;
use jestcap::metrics::{
    diversity_score, humour_score, HashEmbedder, HumourClassifierParams, ScorerRegistry,
};
use jestcap::{
    pad_batch, position_loss, CorpusManifest, KernelSpec, LossConfig, Split, TokenId, BOS, EOS,
};

const WORDS: [&str; 12] = [
    "dog", "cat", "runs", "eats", "big", "the", "a", "and", "cake", "sleeps", "happy", "!",
];

fn caption() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..6).prop_map(|w| w.join(" "))
}

fn manifest_rows() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((0..4u8, caption()), 1..12)
        .prop_map(|v| v.into_iter().map(|(i, c)| (format!("img{i}"), c)).collect())
}

fn manifest(rows: &[(String, String)]) -> CorpusManifest {
    CorpusManifest::from_rows(
        rows.iter()
            .map(|(i, c)| (i.as_str(), c.as_str(), 1.0, Split::Train)),
        "en",
    )
    .unwrap()
}

fn lexicon() -> PosLexicon {
    PosLexicon::new([
        ("dog", PosTag::Noun),
        ("cat", PosTag::Noun),
        ("cake", PosTag::Noun),
        ("runs", PosTag::Verb),
        ("eats", PosTag::Verb),
        ("sleeps", PosTag::Verb),
        ("big", PosTag::Adj),
        ("happy", PosTag::Adj),
        ("and", PosTag::Conj),
    ])
}

/// Row-wise distributions for `rows` sequences of body length `len`.
fn batch_inputs(
    rows: usize,
    len: usize,
    k: usize,
) -> impl Strategy<Value = (Vec<Vec<TokenId>>, Array3<f64>)> {
    let seqs = prop::collection::vec(
        prop::collection::vec(4..k as TokenId, 1..=len).prop_map(|mut body| {
            body.insert(0, BOS);
            body.push(EOS);
            body
        }),
        rows,
    );
    let logits = prop::collection::vec(-3.0..3.0f64, rows * (len + 2) * k);
    (seqs, logits).prop_map(move |(seqs, logits)| {
        let mut p = Array3::from_shape_vec((rows, len + 2, k), logits).unwrap();
        for mut lane in p.lanes_mut(ndarray::Axis(2)) {
            lane.mapv_inplace(f64::exp);
            let s = lane.sum();
            lane.mapv_inplace(|x| x / s);
        }
        (seqs, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_invariant_under_row_permutation(
        (seqs, probs) in batch_inputs(4, 5, 10),
        alpha in 0.5..10.0f64,
        shift in 1usize..4,
    ) {
        let config = LossConfig::new(KernelSpec::sigmoid(alpha).unwrap());
        let batch = pad_batch(&seqs).unwrap();
        let cols = batch.cols();
        let base = position_loss(&probs.slice(ndarray::s![.., ..cols, ..]).to_owned(), &batch, &config).unwrap();

        let order: Vec<usize> = (0..seqs.len()).map(|i| (i + shift) % seqs.len()).collect();
        let permuted: Vec<Vec<TokenId>> = order.iter().map(|&i| seqs[i].clone()).collect();
        let pbatch = pad_batch(&permuted).unwrap();
        let pprobs = probs.select(ndarray::Axis(0), &order);
        let moved = position_loss(&pprobs.slice(ndarray::s![.., ..pbatch.cols(), ..]).to_owned(), &pbatch, &config).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn diversity_scale_and_permutation_invariant(
        vs in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 2..7),
        scales in prop::collection::vec(0.1..20.0f64, 7),
        rot in 0usize..7,
    ) {
        prop_assume!(vs.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6));
        let base = diversity_score(&vs).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let scaled: Vec<Vec<f64>> = vs.iter().zip(&scales).map(|(v, s)| v.iter().map(|x| x * s).collect()).collect();
        prop_assert!((diversity_score(&scaled).unwrap() - base).abs() < 1e-9);
        let mut rotated = vs.clone();
        rotated.rotate_left(rot % vs.len());
        prop_assert!((diversity_score(&rotated).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn humour_score_increases_with_linear_score(
        weights in prop::collection::vec(-2.0..2.0f64, 8),
        b1 in -5.0..5.0f64,
        delta in 0.01..3.0f64,
    ) {
        let emb = HashEmbedder::new(4, 1).unwrap();
        let lo = HumourClassifierParams { weights: weights.clone(), bias: b1 };
        let hi = HumourClassifierParams { weights, bias: b1 + delta };
        let s_lo = humour_score(&lo, "img", "a cat", &emb).unwrap();
        let s_hi = humour_score(&hi, "img", "a cat", &emb).unwrap();
        prop_assert!((0.0..=1.0).contains(&s_lo));
        prop_assert!(s_hi > s_lo || (s_lo == 1.0 && s_hi == 1.0));
        prop_assert!(logistic(b1 + delta) > logistic(b1));
    }

    #[test]
    fn corpus_counts_are_consistent(rows in manifest_rows()) {
        let m = manifest(&rows);
        let s = captions_per_image_stats(&m).unwrap();
        prop_assert_eq!(s.histogram.iter().sum::<usize>(), s.images);
        prop_assert_eq!(s.records, rows.len());
        prop_assert!((s.mean * s.images as f64 - rows.len() as f64).abs() < 1e-9);
        let e = emotion_distribution(&m, &KeywordEmotionClassifier::builtin()).unwrap();
        prop_assert!((e.distribution.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&e.emotional_fraction));
    }

    #[test]
    fn patterns_ignore_reordering_and_grow_with_records(rows in manifest_rows(), extra in caption()) {
        let subset = BTreeSet::from([PosTag::Noun, PosTag::Verb]);
        let lex = lexicon();
        let base = grammar_patterns(&manifest(&rows), &lex, &subset).unwrap();
        let mut reversed = rows.clone();
        reversed.reverse();
        prop_assert_eq!(&grammar_patterns(&manifest(&reversed), &lex, &subset).unwrap(), &base);
        let mut more = rows.clone();
        more.push(("img9".into(), extra));
        prop_assert!(grammar_patterns(&manifest(&more), &lex, &subset).unwrap().distinct() >= base.distinct());
    }

    #[test]
    fn curation_is_idempotent_and_conserving(rows in manifest_rows(), min in 1usize..3, span in 0usize..4) {
        let m = manifest(&rows);
        let spec = FilterSpec::new(vec![
            FilterStage::Length { min, max: min + span },
            FilterStage::Dedup,
        ]);
        let registry = ScorerRegistry::new();
        let (once, report) = apply_filters(&m, &spec, &registry).unwrap();
        prop_assert!(report.check_conservation(m.len(), once.len()));
        let (twice, again) = apply_filters(&once, &spec, &registry).unwrap();
        prop_assert_eq!(twice, once);
        prop_assert_eq!(again.total_dropped(), 0);
    }

    #[test]
    fn manifest_roundtrip_is_byte_exact(rows in manifest_rows(), scores in prop::collection::vec(0.0..500.0f64, 12)) {
        let m = CorpusManifest::from_rows(
            rows.iter().zip(&scores).map(|((i, c), s)| (i.as_str(), c.as_str(), s.floor(), Split::Test)),
            "en",
        )
        .unwrap();
        let text = m.to_canonical_string();
        let back = CorpusManifest::parse(&text).unwrap();
        prop_assert_eq!(back.to_canonical_string(), text);
        prop_assert_eq!(back, m);
    }
}
