mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::*;
use transdict::classlm::{ContextualParams, LexicalParams};
use transdict::corpus::{ClassId, Lexicon, Token};
use transdict::synth::{synthesize, SynthConfig};
use transdict::{
    lm_sentence_logprob, perplexity, tag_pairs, to_bilexical, train_bilexical, train_class_lm,
    word_accuracy, ClassLM, LmTrainConfig, SentencePair, SmoothingConfig, TmTrainConfig, TransModel,
};

/// Three words in one class, each emitted with probability 1/3, and a
/// context-free successor distribution of 3/4 class, 1/4 end. Every event then
/// has probability 1/4, so perplexity is 4 whatever the sentence lengths.
#[test]
fn uniform_three_word_model_has_perplexity_four() {
    let mut lexicon = Lexicon::new(vec!["W".into(), "X".into()]).unwrap();
    let mut lexical = LexicalParams::default();
    for w in ["a", "b", "c"] {
        lexicon.insert(w, [ClassId(0)]).unwrap();
        lexical.insert(w, ClassId(0), 1.0 / 3.0);
    }
    let mut table = Vec::new();
    for _ in 0..9 {
        table.extend([0.75, 0.0, 0.25]);
    }
    let lm = ClassLM {
        contextual: ContextualParams::from_table(2, table).unwrap(),
        lexical,
        lexicon,
    };
    let pairs = vec![
        SentencePair::from_text("a b", "x").unwrap(),
        SentencePair::from_text("c c a", "y").unwrap(),
        SentencePair::from_text("b", "z").unwrap(),
    ];
    let p = perplexity(&pairs, &TransModel::lm_only(lm), SmoothingConfig::pure_lm()).unwrap();
    assert_eq!(p.events, 9);
    assert!((p.value - 4.0).abs() < 1e-12, "{}", p.value);
}

#[test]
fn one_sentence_unrolls_the_definition() {
    let lm = random_lm(3, 2, 5);
    let pair = SentencePair {
        french: words("f", &[1, 2, 0]),
        english: words("e", &[0]),
    };
    let logp = lm_sentence_logprob(&pair.french, &lm).unwrap();
    let p = perplexity(std::slice::from_ref(&pair), &TransModel::lm_only(lm), SmoothingConfig::pure_lm()).unwrap();
    assert!((p.value - (-logp / 4.0).exp()).abs() < 1e-12 * p.value);
}

#[test]
fn zero_weight_equals_the_language_model_exactly() {
    for seed in 0..10 {
        let lm = random_lm(seed, 3, 8);
        let bilex = random_bilexical(seed, &lm, 4, 0.5);
        let pairs: Vec<SentencePair> = (0..6)
            .map(|k| SentencePair {
                french: words("f", &[(k + seed as usize) % 8, (3 * k) % 8, (k * k) % 8]),
                english: words("e", &[k % 4, (k + 1) % 4]),
            })
            .collect();
        let model = TransModel::new(bilex, lm.clone());
        let got = perplexity(&pairs, &model, SmoothingConfig::pure_lm()).unwrap();
        let logp: f64 = pairs.iter().map(|p| lm_sentence_logprob(&p.french, &lm).unwrap()).sum();
        assert_eq!(got.log_prob, logp);
    }
}

#[test]
fn deterministic_translations_lower_perplexity() {
    let corpus = synthesize(&SynthConfig {
        french_vocab: 60,
        english_vocab: 40,
        num_classes: 3,
        concentration: 1.0,
        train_pairs: 600,
        null_rate: 0.0,
        spurious_rate: 0.0,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let french: Vec<Vec<Token>> = corpus.train.iter().map(|p| p.french.clone()).collect();
    let (lm, _) = train_class_lm(&french, &corpus.lexicon, &LmTrainConfig::default()).unwrap();
    let (tagged, _) = tag_pairs(&corpus.train, &lm);
    let (joint, _) = train_bilexical(&tagged, &TmTrainConfig::default()).unwrap();
    let model = TransModel::new(to_bilexical(&joint), lm);
    let held = &corpus.train[..50];
    let w0 = perplexity(held, &model, SmoothingConfig::interpolate(0.0).unwrap()).unwrap();
    let w1 = perplexity(held, &model, SmoothingConfig::interpolate(1.0).unwrap()).unwrap();
    assert!(w1.value.is_finite());
    assert!(w1.value < w0.value, "{} vs {}", w1.value, w0.value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn relabeling_preserves_counts(seed in any::<u64>(), sents in 1usize..6, swaps in proptest::collection::vec((0usize..6, 0usize..6), 0..10)) {
        let lm = random_lm(seed, 3, 6);
        let all: BTreeSet<ClassId> = (0..3).map(ClassId).collect();
        let mut refs = Vec::new();
        let mut hyps = Vec::new();
        for k in 0..sents {
            let r: Vec<usize> = (0..4).map(|i| (seed as usize).wrapping_add(k * 5 + i * 7) % 6).collect();
            let mut h = r.clone();
            for &(i, v) in &swaps {
                if i < 4 && (i + k) % 2 == 0 {
                    h[i] = v;
                }
            }
            refs.push(r);
            hyps.push(h);
        }
        // A fixed permutation of word identities, applied to both sides.
        let perm = [3, 0, 5, 1, 4, 2];
        let as_tokens = |s: &[Vec<usize>], p: bool| -> Vec<Vec<Token>> {
            s.iter().map(|x| words("f", &x.iter().map(|&i| if p { perm[i] } else { i }).collect::<Vec<_>>())).collect()
        };
        let a = word_accuracy(&as_tokens(&hyps, false), &as_tokens(&refs, false), &all, &lm).unwrap();
        let b = word_accuracy(&as_tokens(&hyps, true), &as_tokens(&refs, true), &all, &lm).unwrap();
        prop_assert_eq!(a.words_total, b.words_total);
        prop_assert_eq!(a.words_correct, b.words_correct);
        prop_assert_eq!(a.content_errors + a.function_errors, a.words_total - a.words_correct);
        prop_assert_eq!(b.content_errors, b.words_total - b.words_correct);
    }
}
