//! Brute-force oracles shared by the integration tests. Everything here
//! enumerates explicitly and never calls the dynamic-programming code paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transdict::classlm::{ContextualParams, LexicalParams};
use transdict::corpus::{ClassId, Lexicon, Token};
use transdict::phonosim::Candidate;
use transdict::{ClassLM, NBestLattice, TransModel};

/// Every sequence of length `len` over `0..c`, in lexicographic order.
pub fn sequences(c: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..c).map(move |x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

fn cls(c: usize) -> Option<ClassId> {
    Some(ClassId(c as u16))
}

/// p(c) for a class sequence: trigram transitions from two boundaries plus the end event.
pub fn class_sequence_prob(ctx: &ContextualParams, classes: &[usize]) -> f64 {
    let mut p = 1.0;
    let (mut a, mut b) = (None, None);
    for &c in classes {
        p *= ctx.prob(a, b, cls(c));
        a = b;
        b = cls(c);
    }
    p * ctx.prob(a, b, None)
}

/// Σ_c p(c) Π_i emit(i, c_i), enumerated.
pub fn brute_sum(ctx: &ContextualParams, len: usize, emit: impl Fn(usize, usize) -> f64) -> f64 {
    sequences(ctx.num_classes(), len)
        .iter()
        .map(|seq| {
            class_sequence_prob(ctx, seq)
                * seq.iter().enumerate().map(|(i, &c)| emit(i, c)).product::<f64>()
        })
        .sum()
}

/// Lexical probability restricted to the lexicon's admissible classes.
pub fn lm_emit(lm: &ClassLM, word: &str, c: usize) -> f64 {
    match lm.lexicon.classes_of(word) {
        Some(cs) if cs.contains(&ClassId(c as u16)) => lm.lexical.prob(word, ClassId(c as u16)),
        _ => 0.0,
    }
}

pub fn random_contextual(rng: &mut impl Rng, c: usize, zero_rate: f64) -> ContextualParams {
    let w = c + 1;
    let mut probs = Vec::with_capacity(w * w * w);
    for _ in 0..w * w {
        let mut row: Vec<f64> = (0..w)
            .map(|_| if rng.random::<f64>() < zero_rate { 0.0 } else { rng.random::<f64>() + 0.05 })
            .collect();
        if row.iter().all(|&x| x == 0.0) {
            row[w - 1] = 1.0;
        }
        let total: f64 = row.iter().sum();
        probs.extend(row.into_iter().map(|x| x / total));
    }
    ContextualParams::from_table(c, probs).unwrap()
}

pub fn class_names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("K{i}")).collect()
}

/// A random class LM over `vocab` French words with 1..=c classes each and
/// normalized lexical rows.
pub fn random_lm(seed: u64, c: usize, vocab: usize) -> ClassLM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lexicon = Lexicon::new(class_names(c)).unwrap();
    let mut raw: Vec<(String, ClassId, f64)> = Vec::new();
    for w in 0..vocab {
        let word = format!("f{w}");
        let mut classes: Vec<ClassId> = (0..c)
            .filter(|_| rng.random::<f64>() < 0.6)
            .map(|k| ClassId(k as u16))
            .collect();
        if classes.is_empty() {
            classes.push(ClassId(rng.random_range(0..c) as u16));
        }
        for &k in &classes {
            raw.push((word.clone(), k, rng.random::<f64>() + 0.01));
        }
        lexicon.insert(&word, classes).unwrap();
    }
    let mut sums = vec![0.0; c];
    for (_, k, p) in &raw {
        sums[k.index()] += p;
    }
    let mut lexical = LexicalParams::default();
    for (w, k, p) in raw {
        lexical.insert(&w, k, p / sums[k.index()]);
    }
    ClassLM {
        contextual: random_contextual(&mut rng, c, 0.1),
        lexical,
        lexicon,
    }
}

pub fn words(prefix: &str, ids: &[usize]) -> Vec<Token> {
    ids.iter()
        .map(|i| Token::new(format!("{prefix}{i}")).unwrap())
        .collect()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        ((got - want) / want).abs()
    }
}

/// Relative error between probabilities given in log space.
pub fn log_rel_err(got_log: f64, want: f64) -> f64 {
    if want == 0.0 {
        return if got_log == f64::NEG_INFINITY { 0.0 } else { f64::INFINITY };
    }
    ((got_log - want.ln()).exp() - 1.0).abs()
}

/// A random normalized bi-lexical table over French words `f0..`, English
/// words `e0..` and NULL, restricted to each French word's lexicon classes.
pub fn random_bilexical(
    seed: u64,
    lm: &ClassLM,
    e_vocab: usize,
    density: f64,
) -> transdict::BiLexicalParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    let mut out = transdict::BiLexicalParams::default();
    let e_names: Vec<Option<String>> = std::iter::once(None)
        .chain((0..e_vocab).map(|i| Some(format!("e{i}"))))
        .collect();
    for e in &e_names {
        for c in 0..lm.num_classes() {
            let cid = ClassId(c as u16);
            let mut row: Vec<(&str, f64)> = Vec::new();
            for (w, cs) in lm.lexicon.iter() {
                if cs.contains(&cid) && rng.random::<f64>() < density {
                    row.push((w, rng.random::<f64>() + 0.01));
                }
            }
            if row.is_empty() {
                continue;
            }
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            for (w, p) in row.iter_mut() {
                out.insert(w, cid, e.as_deref(), *p / total);
            }
        }
    }
    out
}

/// p(f|e) by explicit enumeration of every class sequence and every alignment
/// vector: Σ_c p(c) Σ_a (|e|+1)^-|f| Π_i p(f_i | c_i, e_{a_i}).
pub fn alignment_sum(
    lm: &ClassLM,
    bilex: &transdict::BiLexicalParams,
    french: &[Token],
    english: &[Token],
) -> f64 {
    let width = english.len() + 1;
    let alignments = sequences(width, french.len());
    let a_count = alignments.len() as f64;
    let admissible = |w: &str, c: usize| {
        lm.lexicon
            .classes_of(w)
            .is_some_and(|cs| cs.contains(&ClassId(c as u16)))
    };
    sequences(lm.num_classes(), french.len())
        .iter()
        .map(|classes| {
            let pc = class_sequence_prob(&lm.contextual, classes);
            let inner: f64 = alignments
                .iter()
                .map(|a| {
                    french
                        .iter()
                        .zip(classes)
                        .zip(a)
                        .map(|((f, &c), &j)| {
                            if !admissible(f.as_str(), c) {
                                return 0.0;
                            }
                            let e = if j == 0 { None } else { Some(english[j - 1].as_str()) };
                            bilex.get(f.as_str(), ClassId(c as u16), e)
                        })
                        .product::<f64>()
                        / a_count
                })
                .sum();
            pc * inner
        })
        .sum()
}

/// Random candidate lists of width `n` over words `f0..f{vocab-1}`, in rank order.
pub fn random_lattice(rng: &mut impl Rng, vocab: usize, len: usize, n: usize) -> NBestLattice {
    let mut positions = Vec::new();
    for _ in 0..len {
        let mut ids: Vec<usize> = (0..vocab).collect();
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let mut list: Vec<Candidate> = ids[..n]
            .iter()
            .map(|&i| Candidate {
                word: format!("f{i}"),
                score: -3.0 * rng.random::<f64>(),
            })
            .collect();
        list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.word.cmp(&b.word)));
        positions.push(list);
    }
    NBestLattice {
        truth: vec![None; len],
        positions,
    }
}

/// A random model, lattice and English sentence over a 6-word French vocabulary.
pub fn instance(seed: u64, c: usize, len: usize, n: usize) -> (TransModel, NBestLattice, Vec<Token>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lm = random_lm(seed, c, 6);
    let bilex = random_bilexical(seed, &lm, 3, 0.7);
    let lattice = random_lattice(&mut rng, 6, len, n);
    let e_len = rng.random_range(0..=3);
    let english = words("e", &(0..e_len).map(|_| rng.random_range(0..3)).collect::<Vec<_>>());
    (TransModel::new(bilex, lm), lattice, english)
}
