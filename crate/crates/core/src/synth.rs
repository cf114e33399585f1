//! Synthetic bilingual corpora drawn from a known ground-truth model.
//!
//! Each sentence is generated class-first: a class sequence from a random
//! trigram table, then per position an English word of that class and its
//! French rendering from a concentrated translation distribution. Some French
//! words have no English source (NULL) and some English words have no French
//! output. French words get CV-syllable spellings that double as their
//! pronunciations, so near neighbours in spelling are also acoustically
//! confusable; a small fraction are made exact homophones of another word.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;

use crate::classlm::ContextualParams;
use crate::corpus::{write_bitext, write_lexicon, ClassId, Lexicon, SentencePair, Token, DEFAULT_CLASSES};
use crate::error::{Error, Result};
use crate::logspace::fmt_prob;
use crate::phonosim::{write_phonetic_dict, PhoneString, PhoneticDict};
use crate::transmodel::BiLexicalParams;

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub french_vocab: usize,
    pub english_vocab: usize,
    pub num_classes: usize,
    /// Mass of each English word's main French translation within its class.
    pub concentration: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub train_len: (usize, usize),
    pub test_len: (usize, usize),
    /// Share of French tokens generated from NULL.
    pub null_rate: f64,
    /// Chance of an extra untranslated English word per French token.
    pub spurious_rate: f64,
    /// Share of French words admitted in a second class.
    pub ambiguity: f64,
    /// Share of French words given another word's pronunciation.
    pub homophone_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            french_vocab: 200,
            english_vocab: 200,
            num_classes: 5,
            concentration: 0.9,
            train_pairs: 5000,
            test_pairs: 50,
            train_len: (5, 25),
            test_len: (15, 20),
            null_rate: 0.1,
            spurious_rate: 0.05,
            ambiguity: 0.1,
            homophone_rate: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let c = self.num_classes;
        let bad = |m: String| Err(Error::Precondition(m));
        if !(2..=DEFAULT_CLASSES.len()).contains(&c) {
            return bad(format!("class count must be in 2..={}", DEFAULT_CLASSES.len()));
        }
        if self.french_vocab < 2 * c || self.english_vocab < c {
            return bad("each class needs at least two French words and one English word".into());
        }
        if self.french_vocab > 20_000 || self.english_vocab > 20_000 {
            return bad("vocabulary too large for the syllable generator".into());
        }
        for (name, (lo, hi)) in [("train", self.train_len), ("test", self.test_len)] {
            if lo == 0 || lo > hi {
                return bad(format!("bad {name} length range {lo}..={hi}"));
            }
        }
        for (name, p) in [
            ("concentration", self.concentration),
            ("null_rate", self.null_rate),
            ("spurious_rate", self.spurious_rate),
            ("ambiguity", self.ambiguity),
            ("homophone_rate", self.homophone_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.null_rate >= 1.0 {
            return bad("null_rate must be below 1".into());
        }
        Ok(())
    }
}

/// The generating model.
#[derive(Clone, Debug)]
pub struct SynthTruth {
    /// Trigram over classes; the end column reflects the mean training length.
    pub contextual: ContextualParams,
    /// `p(f | c, e)` including NULL rows.
    pub bilexical: BiLexicalParams,
    /// Main translation of each (class, English word).
    pub translations: BTreeMap<(ClassId, String), String>,
    /// How often each (class, English word) produced a French word in training.
    pub occurrences: BTreeMap<(ClassId, String), usize>,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub train: Vec<SentencePair>,
    pub test: Vec<SentencePair>,
    pub lexicon: Lexicon,
    pub phonetic: PhoneticDict,
    pub truth: SynthTruth,
}

fn syllable_words(rng: &mut impl Rng, count: usize, min_syll: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut syll = min_syll;
    let mut misses = 0;
    while out.len() < count {
        let w: String = (0..syll)
            .flat_map(|_| {
                [
                    CONSONANTS[rng.random_range(0..CONSONANTS.len())],
                    VOWELS[rng.random_range(0..VOWELS.len())],
                ]
            })
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
            misses = 0;
        } else {
            misses += 1;
            if misses > 50 {
                syll += 1;
                misses = 0;
            }
        }
    }
    out
}

/// Splits `total` items over `c` classes, at least `min` each, sizes skewed at random.
fn class_sizes(rng: &mut impl Rng, total: usize, c: usize, min: usize) -> Vec<usize> {
    let weights: Vec<f64> = (0..c).map(|_| 0.5 + rng.random::<f64>()).collect();
    let sum: f64 = weights.iter().sum();
    let spare = total - min * c;
    let mut sizes: Vec<usize> = weights.iter().map(|w| min + (spare as f64 * w / sum) as usize).collect();
    let mut k = 0;
    while sizes.iter().sum::<usize>() < total {
        sizes[k % c] += 1;
        k += 1;
    }
    sizes
}

/// Zipf-like weights in a random order.
fn zipf_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|k| 1.0 / (k + 1) as f64).collect();
    w.shuffle(rng);
    w
}

fn dirichlet_row(rng: &mut impl Rng, n: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut row: Vec<f64> = (0..n).map(|_| g.sample(rng).max(1e-12)).collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    row
}

struct Generator {
    c: usize,
    /// Class-trigram successor weights over real classes, per (a, b) context.
    transitions: Vec<WeightedIndex<f64>>,
    english: Vec<Vec<String>>,
    english_pick: Vec<WeightedIndex<f64>>,
    french: Vec<Vec<String>>,
    /// Translation distribution per (class, English index within class), over `french[class]`.
    translate: Vec<Vec<WeightedIndex<f64>>>,
    null_pick: Vec<WeightedIndex<f64>>,
    all_english: Vec<String>,
}

impl Generator {
    fn sentence(
        &self,
        rng: &mut impl Rng,
        len: (usize, usize),
        cfg: &SynthConfig,
        mut occurrences: Option<&mut BTreeMap<(ClassId, String), usize>>,
    ) -> SentencePair {
        let n = rng.random_range(len.0..=len.1);
        let (mut a, mut b) = (self.c, self.c);
        let mut french = Vec::with_capacity(n);
        let mut english = Vec::with_capacity(n);
        for _ in 0..n {
            let k = self.transitions[a * (self.c + 1) + b].sample(rng);
            let f = if rng.random::<f64>() < cfg.null_rate {
                &self.french[k][self.null_pick[k].sample(rng)]
            } else {
                let ei = self.english_pick[k].sample(rng);
                let e = &self.english[k][ei];
                english.push(e.clone());
                if let Some(occ) = occurrences.as_deref_mut() {
                    *occ.entry((ClassId(k as u16), e.clone())).or_default() += 1;
                }
                &self.french[k][self.translate[k][ei].sample(rng)]
            };
            french.push(Token::new(f.clone()).expect("generated words are tokens"));
            if rng.random::<f64>() < cfg.spurious_rate {
                english.push(self.all_english[rng.random_range(0..self.all_english.len())].clone());
            }
            a = b;
            b = k;
        }
        if english.is_empty() {
            english.push(self.all_english[rng.random_range(0..self.all_english.len())].clone());
        }
        let english = english
            .into_iter()
            .map(|e| Token::new(e).expect("generated words are tokens"))
            .collect();
        SentencePair { french, english }
    }
}

/// Samples a ground-truth model and a train/test corpus from it; identical
/// configurations give identical output.
pub fn synthesize(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.num_classes;
    let class_names: Vec<String> = DEFAULT_CLASSES[..c].iter().map(|s| s.to_string()).collect();

    let mut taken = BTreeSet::new();
    let french_words = syllable_words(&mut rng, cfg.french_vocab, 2, &mut taken);
    let english_words: Vec<String> = syllable_words(&mut rng, cfg.english_vocab, 2, &mut taken)
        .into_iter()
        .map(|w| format!("{w}h"))
        .collect();

    let f_sizes = class_sizes(&mut rng, cfg.french_vocab, c, 2);
    let e_sizes = class_sizes(&mut rng, cfg.english_vocab, c, 1);
    let mut french: Vec<Vec<String>> = Vec::with_capacity(c);
    let mut english: Vec<Vec<String>> = Vec::with_capacity(c);
    let (mut fi, mut ei) = (0, 0);
    for k in 0..c {
        french.push(french_words[fi..fi + f_sizes[k]].to_vec());
        english.push(english_words[ei..ei + e_sizes[k]].to_vec());
        fi += f_sizes[k];
        ei += e_sizes[k];
    }
    // Ambiguous words also join one other class.
    for w in &french_words {
        if rng.random::<f64>() < cfg.ambiguity {
            let home = french.iter().position(|ws| ws.contains(w)).expect("assigned");
            let other = (home + 1 + rng.random_range(0..c - 1)) % c;
            french[other].push(w.clone());
        }
    }

    let mut lexicon = Lexicon::new(class_names)?;
    for (k, ws) in french.iter().enumerate() {
        for w in ws {
            lexicon.insert(w, [ClassId(k as u16)])?;
        }
    }

    let w = c + 1;
    let mean_len = (cfg.train_len.0 + cfg.train_len.1) as f64 / 2.0;
    let end = 1.0 / (mean_len + 1.0);
    let mut table = Vec::with_capacity(w * w * w);
    let mut transitions = Vec::with_capacity(w * w);
    for _ in 0..w * w {
        let row = dirichlet_row(&mut rng, c, 0.5);
        transitions.push(WeightedIndex::new(&row).expect("positive row"));
        table.extend(row.iter().map(|p| p * (1.0 - end)));
        table.push(end);
    }
    let contextual = ContextualParams::from_table(c, table)?;

    let mut bilexical = BiLexicalParams::default();
    let mut translations = BTreeMap::new();
    let mut translate = Vec::with_capacity(c);
    let mut null_pick = Vec::with_capacity(c);
    let mut english_pick = Vec::with_capacity(c);
    for k in 0..c {
        let cid = ClassId(k as u16);
        let unigram = zipf_weights(&mut rng, french[k].len());
        let total: f64 = unigram.iter().sum();
        let unigram: Vec<f64> = unigram.iter().map(|u| u / total).collect();
        for (f, p) in french[k].iter().zip(&unigram) {
            bilexical.insert(f, cid, None, *p);
        }
        null_pick.push(WeightedIndex::new(&unigram).expect("positive weights"));
        english_pick.push(WeightedIndex::new(zipf_weights(&mut rng, english[k].len())).expect("positive weights"));
        let mut rows = Vec::with_capacity(english[k].len());
        for e in &english[k] {
            let main = rng.random_range(0..french[k].len());
            let row: Vec<f64> = unigram
                .iter()
                .enumerate()
                .map(|(j, u)| (1.0 - cfg.concentration) * u + if j == main { cfg.concentration } else { 0.0 })
                .collect();
            for (f, p) in french[k].iter().zip(&row) {
                if *p > 0.0 {
                    bilexical.insert(f, cid, Some(e), *p);
                }
            }
            translations.insert((cid, e.clone()), french[k][main].clone());
            rows.push(WeightedIndex::new(&row).expect("positive row"));
        }
        translate.push(rows);
    }

    // Spelling is pronunciation, one phone per letter.
    let mut phonetic = PhoneticDict::new();
    for word in &french_words {
        let source = if rng.random::<f64>() < cfg.homophone_rate {
            &french_words[rng.random_range(0..french_words.len())]
        } else {
            word
        };
        phonetic.insert(word, PhoneString::new(source.chars().map(String::from).collect())?)?;
    }

    let generator = Generator {
        c,
        transitions,
        english,
        english_pick,
        french,
        translate,
        null_pick,
        all_english: english_words,
    };
    let mut occurrences = BTreeMap::new();
    let train = (0..cfg.train_pairs)
        .map(|_| generator.sentence(&mut rng, cfg.train_len, cfg, Some(&mut occurrences)))
        .collect();
    let test = (0..cfg.test_pairs)
        .map(|_| generator.sentence(&mut rng, cfg.test_len, cfg, None))
        .collect();

    Ok(SynthCorpus {
        train,
        test,
        lexicon,
        phonetic,
        truth: SynthTruth {
            contextual,
            bilexical,
            translations,
            occurrences,
        },
    })
}

/// `class<TAB>english<TAB>main-french<TAB>occurrences` then `P` rows of the full table.
pub fn format_truth(truth: &SynthTruth, lexicon: &Lexicon) -> String {
    let mut out = String::new();
    for ((c, e), f) in &truth.translations {
        let n = truth.occurrences.get(&(*c, e.clone())).copied().unwrap_or(0);
        let _ = writeln!(out, "T\t{}\t{e}\t{f}\t{n}", lexicon.class_name(*c));
    }
    for (f, c, e, p) in truth.bilexical.iter_sorted() {
        let _ = writeln!(
            out,
            "P\t{}\t{}\t{f}\t{}",
            lexicon.class_name(c),
            e.unwrap_or(crate::transmodel::NULL_LABEL),
            fmt_prob(p)
        );
    }
    out
}

/// Writes `train.txt`, `test.txt`, `lexicon.txt`, `phonedict.txt` and
/// `truth.txt` under `dir`, creating it if needed.
pub fn write_corpus(dir: impl AsRef<Path>, corpus: &SynthCorpus) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_bitext(dir.join("train.txt"), &corpus.train)?;
    write_bitext(dir.join("test.txt"), &corpus.test)?;
    write_lexicon(dir.join("lexicon.txt"), &corpus.lexicon)?;
    write_phonetic_dict(dir.join("phonedict.txt"), &corpus.phonetic)?;
    let truth = dir.join("truth.txt");
    fs::write(&truth, format_truth(&corpus.truth, &corpus.lexicon)).map_err(|e| Error::io(&truth, e))
}
