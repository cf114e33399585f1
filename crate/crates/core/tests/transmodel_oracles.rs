mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transdict::classlm::{ContextualParams, LexicalParams};
use transdict::corpus::{tokens, ClassId, Lexicon, SentencePair, Token};
use transdict::{
    lm_sentence_logprob, sentence_lexical, smoothed_score, tm_sentence_logprob, to_bilexical,
    train_bilexical, ClassLM, SmoothingConfig, TaggedPair, TmTrainConfig, TransModel,
};

fn random_words(rng: &mut ChaCha8Rng, prefix: &str, vocab: usize, len: usize) -> Vec<Token> {
    let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
    words(prefix, &ids)
}

#[test]
fn product_of_sums_matches_alignment_enumeration() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = rng.random_range(2..=3);
        let lm = random_lm(seed, c, 5);
        let model = TransModel::new(random_bilexical(seed, &lm, 4, 0.7), lm);
        let (fl, el) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let f = random_words(&mut rng, "f", 5, fl);
        let e = random_words(&mut rng, "e", 4, el);
        let want = alignment_sum(&model.lm, &model.bilexical, &f, &e);
        let pair = SentencePair::new(f, e).unwrap();
        let got = tm_sentence_logprob(&pair, &model, SmoothingConfig::Interpolate { weight: 1.0 }).unwrap();
        assert!(log_rel_err(got, want) <= 1e-10, "seed {seed}: {got} vs ln {}", want.ln());
    }
}

#[test]
fn smoothed_forward_matches_class_enumeration() {
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lm = random_lm(seed, 3, 6);
        let model = TransModel::new(random_bilexical(seed, &lm, 4, 0.5), lm);
        let pair = SentencePair::new(random_words(&mut rng, "f", 6, 3), random_words(&mut rng, "e", 4, 2)).unwrap();
        for cfg in [
            SmoothingConfig::Interpolate { weight: 0.85 },
            SmoothingConfig::Maximum,
            SmoothingConfig::ETest { threshold: 1.2 },
        ] {
            let emit = |i: usize, k: usize| {
                if lm_emit(&model.lm, pair.french[i].as_str(), k) == 0.0 {
                    return 0.0;
                }
                smoothed_score(pair.french[i].as_str(), ClassId(k as u16), &pair.english, &model, cfg)
            };
            let want = brute_sum(&model.lm.contextual, 3, emit);
            let got = tm_sentence_logprob(&pair, &model, cfg).unwrap();
            assert!(log_rel_err(got, want) <= 1e-10, "seed {seed} {cfg}");
        }
    }
}

#[test]
fn empty_table_reduces_to_pure_lm() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = TransModel::lm_only(random_lm(seed, 3, 6));
        let pair = SentencePair::new(random_words(&mut rng, "f", 6, 4), random_words(&mut rng, "e", 4, 3)).unwrap();
        let tm = tm_sentence_logprob(&pair, &model, SmoothingConfig::pure_lm()).unwrap();
        let lm = lm_sentence_logprob(&pair.french, &model.lm).unwrap();
        assert_eq!(tm.to_bits(), lm.to_bits());
    }
}

/// EM under uniform alignments computed by enumerating full alignment vectors
/// per pair (rather than factorizing per position).
fn brute_bilexical_em(tagged: &[TaggedPair], iters: usize) -> (BTreeMap<(String, String, u16), f64>, Vec<f64>) {
    let key = |f: &Token, c: ClassId, e: Option<&Token>| {
        (f.to_string(), e.map_or("<NULL>".to_string(), Token::to_string), c.0)
    };
    let mut t: BTreeMap<(String, String, u16), f64> = BTreeMap::new();
    for tp in tagged {
        for (f, &c) in tp.pair.french.iter().zip(&tp.classes) {
            t.insert(key(f, c, None), 0.0);
            for e in &tp.pair.english {
                t.insert(key(f, c, Some(e)), 0.0);
            }
        }
    }
    let mut row_sizes: BTreeMap<String, usize> = BTreeMap::new();
    for (_, e, _) in t.keys() {
        *row_sizes.entry(e.clone()).or_default() += 1;
    }
    for ((_, e, _), v) in t.iter_mut() {
        *v = 1.0 / row_sizes[e] as f64;
    }
    let mut lls = Vec::new();
    for _ in 0..iters {
        let mut counts: BTreeMap<(String, String, u16), f64> = BTreeMap::new();
        let mut ll = 0.0;
        for tp in tagged {
            let width = tp.pair.english.len() + 1;
            let alignments = sequences(width, tp.pair.french.len());
            let scored: Vec<(Vec<usize>, f64)> = alignments
                .into_iter()
                .map(|a| {
                    let p: f64 = tp
                        .pair
                        .french
                        .iter()
                        .zip(&tp.classes)
                        .zip(&a)
                        .map(|((f, &c), &j)| {
                            let e = (j > 0).then(|| &tp.pair.english[j - 1]);
                            t[&key(f, c, e)]
                        })
                        .product();
                    (a, p)
                })
                .collect();
            let z: f64 = scored.iter().map(|(_, p)| p).sum();
            ll += (z / (width as f64).powi(tp.pair.french.len() as i32)).ln();
            for (a, p) in scored {
                for ((f, &c), &j) in tp.pair.french.iter().zip(&tp.classes).zip(&a) {
                    let e = (j > 0).then(|| &tp.pair.english[j - 1]);
                    *counts.entry(key(f, c, e)).or_default() += p / z;
                }
            }
        }
        lls.push(ll);
        let mut totals: BTreeMap<String, f64> = BTreeMap::new();
        for ((_, e, _), n) in &counts {
            *totals.entry(e.clone()).or_default() += n;
        }
        for (k, v) in t.iter_mut() {
            *v = counts.get(k).copied().unwrap_or(0.0) / totals[&k.1];
        }
    }
    (t, lls)
}

fn tagged(f: &str, e: &str, classes: &[u16]) -> TaggedPair {
    TaggedPair {
        pair: SentencePair::from_text(f, e).unwrap(),
        classes: classes.iter().map(|&c| ClassId(c)).collect(),
    }
}

#[test]
fn two_iteration_em_matches_alignment_enumeration() {
    // One English word, two French renderings.
    let data = vec![
        tagged("gouvernement fédéral", "government", &[0, 1]),
        tagged("le gouvernement", "the government", &[2, 0]),
        tagged("état", "government", &[0]),
    ];
    let cfg = TmTrainConfig {
        max_iters: 2,
        rel_tol: f64::NEG_INFINITY,
        prune_floor: 0.0,
    };
    let (joint, hist) = train_bilexical(&data, &cfg).unwrap();
    let (oracle, lls) = brute_bilexical_em(&data, 2);
    for (got, want) in hist.log_likelihoods.iter().zip(&lls) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert_eq!(joint.len(), oracle.values().filter(|&&p| p > 0.0).count());
    for ((f, e, c), p) in &oracle {
        let e = (e != "<NULL>").then_some(e.as_str());
        let got = joint.get(f, ClassId(*c), e);
        assert!((got - p).abs() < 1e-12, "p({f},{c}|{e:?}) {got} vs {p}");
    }
    assert!(joint.max_row_error() < 1e-12);
}

#[test]
fn single_iteration_improves_on_uniform_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<TaggedPair> = (0..60)
        .map(|_| {
            let (fl, el) = (rng.random_range(1..8), rng.random_range(1..8));
            let f = random_words(&mut rng, "f", 15, fl);
            let classes = (0..f.len()).map(|_| ClassId(rng.random_range(0..3))).collect();
            TaggedPair {
                pair: SentencePair::new(f, random_words(&mut rng, "e", 12, el)).unwrap(),
                classes,
            }
        })
        .collect();
    let one = TmTrainConfig { max_iters: 1, ..TmTrainConfig::default() };
    let (_, hist) = train_bilexical(&data, &one).unwrap();
    assert_eq!(hist.iterations(), 1);
    assert!(hist.log_likelihoods[1] >= hist.log_likelihoods[0]);

    let many = TmTrainConfig { max_iters: 30, rel_tol: 0.0, prune_floor: 1e-9 };
    let (joint, hist) = train_bilexical(&data, &many).unwrap();
    assert!(hist.is_non_decreasing(1e-9), "{:?}", hist.log_likelihoods);
    assert!(joint.max_row_error() < 1e-9);
    assert!(to_bilexical(&joint).max_row_error() < 1e-9);
}

fn closed_vocab_model() -> (TransModel, Vec<Token>) {
    let mut lexicon = Lexicon::new(vec!["N".into(), "V".into()]).unwrap();
    let mut lexical = LexicalParams::default();
    for (w, p) in [("a", 0.5), ("b", 0.3), ("c", 0.2)] {
        lexicon.insert(w, [ClassId(0)]).unwrap();
        lexical.insert(w, ClassId(0), p);
    }
    let lm = ClassLM { contextual: ContextualParams::uniform(2), lexical, lexicon };
    let mut bilex = transdict::BiLexicalParams::default();
    bilex.insert("a", ClassId(0), Some("x"), 0.9);
    bilex.insert("c", ClassId(0), Some("x"), 0.1);
    bilex.insert("b", ClassId(0), Some("y"), 1.0);
    bilex.insert("a", ClassId(0), None, 0.2);
    bilex.insert("b", ClassId(0), None, 0.4);
    bilex.insert("c", ClassId(0), None, 0.4);
    (TransModel::new(bilex, lm), tokens("x y z").unwrap())
}

#[test]
fn interpolation_stays_normalized() {
    let (model, e) = closed_vocab_model();
    for w in [0.0, 0.3, 0.85, 1.0] {
        let cfg = SmoothingConfig::Interpolate { weight: w };
        let total: f64 = ["a", "b", "c"].iter().map(|f| smoothed_score(f, ClassId(0), &e, &model, cfg)).sum();
        // "z" has no row, so the sentence average carries 3/4 of the mass at w = 1.
        let want = w * 0.75 + (1.0 - w);
        assert!((total - want).abs() < 1e-6, "w={w}: {total}");
    }
    let covered = tokens("x y").unwrap();
    let total: f64 = ["a", "b", "c"]
        .iter()
        .map(|f| smoothed_score(f, ClassId(0), &covered, &model, SmoothingConfig::default()))
        .sum();
    assert!((total - 1.0).abs() < 1e-6);
}

proptest! {
    #[test]
    fn sentence_average_is_permutation_invariant(seed in any::<u64>(), len in 1usize..6) {
        let lm = random_lm(seed, 3, 6);
        let bilex = random_bilexical(seed, &lm, 5, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_words(&mut rng, "e", 5, len);
        let mut shuffled = e.clone();
        shuffled.reverse();
        shuffled.rotate_left(len / 2);
        for f in 0..6 {
            let f = format!("f{f}");
            for c in 0..3u16 {
                let a = sentence_lexical(&f, ClassId(c), &e, &bilex);
                let b = sentence_lexical(&f, ClassId(c), &shuffled, &bilex);
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn maximum_dominates_both_inputs(seed in any::<u64>()) {
        let lm = random_lm(seed, 3, 6);
        let model = TransModel::new(random_bilexical(seed, &lm, 5, 0.6), lm);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_words(&mut rng, "e", 5, 4);
        for f in 0..6 {
            let f = format!("f{f}");
            for c in 0..3u16 {
                let c = ClassId(c);
                let s = smoothed_score(&f, c, &e, &model, SmoothingConfig::Maximum);
                prop_assert!(s >= sentence_lexical(&f, c, &e, &model.bilexical));
                prop_assert!(s >= model.lm.lexical.prob(&f, c));
            }
        }
    }
}
