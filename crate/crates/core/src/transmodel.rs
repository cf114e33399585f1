//! Bi-lexical translation parameters and the sentence-conditioned tri-class model.
//!
//! Training treats the class sequence as observed and every alignment of French
//! positions to English positions (0 being the NULL token) as equally likely,
//! so the E-step factorizes per French position. The resulting joint table
//! `p(f, c | e)` is turned into `p(f | c, e)`; a sentence `e` then contributes
//! the position average `p(f | c, 𝐞) = Σ_j p(f | c, e_j) / (|𝐞| + 1)`, which
//! replaces the class-lexical probability `p(f | c)` of the language model.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;

use crate::classlm::{parse_prob, tag, ClassLM, ROW_TOLERANCE};
use crate::corpus::{read_file, utf8_lines, ClassId, Lexicon, SentencePair, Token};
use crate::em::EmHistory;
use crate::error::{Error, Result};
use crate::logspace::{fmt_prob, LOG_ZERO};
use crate::trellis::{Emissions, Trellis};

/// Label of the NULL English token in model files.
pub const NULL_LABEL: &str = "<NULL>";

/// `(|e| + 1)^|f|`, the number of alignment vectors.
pub fn alignment_count(f_len: usize, e_len: usize) -> Result<u128> {
    if f_len == 0 {
        return Err(Error::Precondition("f_len must be at least 1".into()));
    }
    let base = e_len as u64 + 1;
    let exponent = u32::try_from(f_len).map_err(|_| Error::Overflow {
        base,
        exponent: u32::MAX,
    })?;
    (base as u128)
        .checked_pow(exponent)
        .ok_or(Error::Overflow { base, exponent })
}

/// `|f| · ln(|e| + 1)`, defined for any size.
pub fn log_alignment_count(f_len: usize, e_len: usize) -> f64 {
    f_len as f64 * ((e_len + 1) as f64).ln()
}

type ClassRows = BTreeMap<ClassId, HashMap<String, f64>>;

/// Sparse table keyed by English conditioner, then class, then French word.
/// `None` as a conditioner is the NULL token.
#[derive(Clone, Debug, Default, PartialEq)]
struct CondTable {
    null: ClassRows,
    words: HashMap<String, ClassRows>,
}

impl CondTable {
    fn rows(&self, e: Option<&str>) -> Option<&ClassRows> {
        match e {
            None => Some(&self.null),
            Some(w) => self.words.get(w),
        }
    }

    fn get(&self, f: &str, c: ClassId, e: Option<&str>) -> f64 {
        self.rows(e)
            .and_then(|r| r.get(&c))
            .and_then(|m| m.get(f))
            .copied()
            .unwrap_or(0.0)
    }

    fn insert(&mut self, f: &str, c: ClassId, e: Option<&str>, p: f64) {
        let rows = match e {
            None => &mut self.null,
            Some(w) => self.words.entry(w.to_string()).or_default(),
        };
        rows.entry(c).or_default().insert(f.to_string(), p);
    }

    /// Conditioners in file order: NULL first, then English words sorted.
    fn conditioners(&self) -> Vec<Option<&str>> {
        let mut words: Vec<&str> = self.words.keys().map(String::as_str).collect();
        words.sort_unstable();
        let mut out = Vec::with_capacity(words.len() + 1);
        if !self.null.is_empty() {
            out.push(None);
        }
        out.extend(words.into_iter().map(Some));
        out
    }

    /// Entries of one class row sorted by French word.
    fn sorted_row(row: &HashMap<String, f64>) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = row.iter().map(|(f, &p)| (f.as_str(), p)).collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    fn iter_sorted(&self) -> Vec<(&str, ClassId, Option<&str>, f64)> {
        let mut out = Vec::new();
        for e in self.conditioners() {
            for (&c, row) in self.rows(e).expect("listed conditioner") {
                for (f, p) in Self::sorted_row(row) {
                    out.push((f, c, e, p));
                }
            }
        }
        out
    }

    fn len(&self) -> usize {
        let count = |r: &ClassRows| r.values().map(HashMap::len).sum::<usize>();
        count(&self.null) + self.words.values().map(count).sum::<usize>()
    }
}

/// Joint parameters `p(f, c | e)`; each conditioner's entries sum to one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointParams(CondTable);

/// Bi-lexical parameters `p(f | c, e)`; each `(c, e)` row sums to one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BiLexicalParams(CondTable);

macro_rules! table_accessors {
    ($ty:ty) => {
        impl $ty {
            /// `e = None` is the NULL token. Absent entries are zero.
            pub fn get(&self, f: &str, c: ClassId, e: Option<&str>) -> f64 {
                self.0.get(f, c, e)
            }

            pub fn insert(&mut self, f: &str, c: ClassId, e: Option<&str>, p: f64) {
                self.0.insert(f, c, e, p)
            }

            /// `(f, c, e, p)` with NULL first, then English, class, French order.
            pub fn iter_sorted(&self) -> Vec<(&str, ClassId, Option<&str>, f64)> {
                self.0.iter_sorted()
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.len() == 0
            }
        }
    };
}

table_accessors!(JointParams);
table_accessors!(BiLexicalParams);

impl JointParams {
    /// Largest deviation of Σ_{f,c} p(f,c|e) from one over all conditioners.
    pub fn max_row_error(&self) -> f64 {
        self.0
            .conditioners()
            .into_iter()
            .map(|e| {
                let rows = self.0.rows(e).expect("listed conditioner");
                let total: f64 = rows
                    .values()
                    .flat_map(|r| CondTable::sorted_row(r).into_iter().map(|(_, p)| p))
                    .sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

impl BiLexicalParams {
    /// Largest deviation of Σ_f p(f|c,e) from one over all `(c, e)` rows.
    pub fn max_row_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for e in self.0.conditioners() {
            for row in self.0.rows(e).expect("listed conditioner").values() {
                let total: f64 = CondTable::sorted_row(row).into_iter().map(|(_, p)| p).sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
        worst
    }

    /// The `(c, e)` row as `(f, p)` sorted by descending probability.
    pub fn ranked_row(&self, c: ClassId, e: Option<&str>) -> Vec<(&str, f64)> {
        let mut v = self
            .0
            .rows(e)
            .and_then(|r| r.get(&c))
            .map(CondTable::sorted_row)
            .unwrap_or_default();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    /// `(c, e)` conditioners present in the table; `e = None` is NULL.
    pub fn conditioners(&self) -> Vec<(ClassId, Option<&str>)> {
        self.0
            .conditioners()
            .into_iter()
            .flat_map(|e| {
                self.0
                    .rows(e)
                    .expect("listed conditioner")
                    .keys()
                    .map(move |&c| (c, e))
            })
            .collect()
    }
}

/// `p(f | c, e) = p(f, c | e) / Σ_f p(f, c | e)`; zero-mass rows are dropped.
pub fn to_bilexical(joint: &JointParams) -> BiLexicalParams {
    let mut out = CondTable::default();
    for e in joint.0.conditioners() {
        for (&c, row) in joint.0.rows(e).expect("listed conditioner") {
            let entries = CondTable::sorted_row(row);
            let total: f64 = entries.iter().map(|(_, p)| p).sum();
            if total <= 0.0 {
                continue;
            }
            for (f, p) in entries {
                if p > 0.0 {
                    out.insert(f, c, e, p / total);
                }
            }
        }
    }
    BiLexicalParams(out)
}

#[derive(Clone, Debug)]
pub struct TmTrainConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Parameters below this value are removed after each M-step.
    pub prune_floor: f64,
}

impl Default for TmTrainConfig {
    fn default() -> Self {
        TmTrainConfig {
            max_iters: 10,
            rel_tol: 1e-4,
            prune_floor: 1e-9,
        }
    }
}

/// A French sentence with one class per token.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedPair {
    pub pair: SentencePair,
    pub classes: Vec<ClassId>,
}

/// Tags the French side of every pair with its most likely class sequence.
/// Pairs that cannot be tagged are skipped with a warning; their count is
/// returned alongside.
pub fn tag_pairs(pairs: &[SentencePair], lm: &ClassLM) -> (Vec<TaggedPair>, usize) {
    let tagged: Vec<Option<TaggedPair>> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, p)| match tag(&p.french, lm) {
            Ok(classes) => Some(TaggedPair {
                pair: p.clone(),
                classes,
            }),
            Err(e) => {
                warn!("pair {k} not tagged: {e}");
                None
            }
        })
        .collect();
    let skipped = tagged.iter().filter(|t| t.is_none()).count();
    (tagged.into_iter().flatten().collect(), skipped)
}

/// Parameter slots laid out row by row; a row is one English conditioner.
struct SlotIndex {
    /// `(english id, event id)` per slot, sorted; english id 0 is NULL.
    keys: Vec<(u32, u32)>,
    /// Start offset of each conditioner's row, plus a final sentinel.
    row_starts: Vec<usize>,
    /// Per pair, a row-major `|f| × (|e| + 1)` matrix of slot ids.
    pair_slots: Vec<Vec<u32>>,
    /// `|e| + 1` per pair.
    widths: Vec<usize>,
}

fn intern<'a>(map: &mut HashMap<&'a str, u32>, names: &mut Vec<&'a str>, key: &'a str) -> u32 {
    *map.entry(key).or_insert_with(|| {
        names.push(key);
        (names.len() - 1) as u32
    })
}

/// Interned corpus: French `(word, class)` events and English words.
struct Interned<'a> {
    events: Vec<(&'a str, ClassId)>,
    english: Vec<Option<&'a str>>,
    slots: SlotIndex,
}

impl<'a> Interned<'a> {
    fn build(tagged: &'a [TaggedPair]) -> Result<Self> {
        let mut event_ids: HashMap<(&str, ClassId), u32> = HashMap::new();
        let mut events: Vec<(&str, ClassId)> = Vec::new();
        let mut eng_ids: HashMap<&str, u32> = HashMap::new();
        let mut eng_names: Vec<&str> = Vec::new();
        let mut raw_pairs: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(tagged.len());
        for (k, tp) in tagged.iter().enumerate() {
            if tp.classes.len() != tp.pair.french.len() {
                return Err(Error::Precondition(format!(
                    "pair {k}: {} classes for {} French tokens",
                    tp.classes.len(),
                    tp.pair.french.len()
                )));
            }
            let fr: Vec<u32> = tp
                .pair
                .french
                .iter()
                .zip(&tp.classes)
                .map(|(f, &c)| {
                    let key = (f.as_str(), c);
                    *event_ids.entry(key).or_insert_with(|| {
                        events.push(key);
                        (events.len() - 1) as u32
                    })
                })
                .collect();
            let mut en = vec![0u32];
            for e in &tp.pair.english {
                // Offset by one so that id 0 stays reserved for NULL.
                let id = intern(&mut eng_ids, &mut eng_names, e.as_str()) + 1;
                en.push(id);
            }
            raw_pairs.push((fr, en));
        }
        let english: Vec<Option<&str>> = std::iter::once(None)
            .chain(eng_names.iter().map(|&s| Some(s)))
            .collect();

        let mut keys: Vec<(u32, u32)> = raw_pairs
            .iter()
            .flat_map(|(fr, en)| fr.iter().flat_map(move |&f| en.iter().map(move |&e| (e, f))))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let slot_of: HashMap<(u32, u32), u32> =
            keys.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        let mut row_starts = Vec::new();
        for (i, &(e, _)) in keys.iter().enumerate() {
            if i == 0 || keys[i - 1].0 != e {
                row_starts.push(i);
            }
        }
        row_starts.push(keys.len());
        let widths = raw_pairs.iter().map(|(_, en)| en.len()).collect();
        let pair_slots = raw_pairs
            .iter()
            .map(|(fr, en)| {
                let mut slots = Vec::with_capacity(fr.len() * en.len());
                for &f in fr {
                    slots.extend(en.iter().map(|&e| slot_of[&(e, f)]));
                }
                slots
            })
            .collect();
        Ok(Interned {
            events,
            english,
            slots: SlotIndex {
                keys,
                row_starts,
                pair_slots,
                widths,
            },
        })
    }
}

/// Per-pair log-likelihood and link posteriors aligned with its slot matrix.
fn pair_posteriors(slots: &[u32], width: usize, t: &[f64]) -> (f64, Vec<f64>) {
    let mut ll = 0.0;
    let mut post = Vec::with_capacity(slots.len());
    for row in slots.chunks(width) {
        let denom: f64 = row.iter().map(|&s| t[s as usize]).sum();
        if denom > 0.0 {
            ll += (denom / width as f64).ln();
            post.extend(row.iter().map(|&s| t[s as usize] / denom));
        } else {
            ll = LOG_ZERO;
            post.extend(std::iter::repeat_n(0.0, width));
        }
    }
    (ll, post)
}

fn bilexical_e_step(idx: &SlotIndex, t: &[f64]) -> (f64, Vec<f64>) {
    let per_pair: Vec<(f64, Vec<f64>)> = idx
        .pair_slots
        .par_iter()
        .zip(idx.widths.par_iter())
        .map(|(slots, &w)| pair_posteriors(slots, w, t))
        .collect();
    let mut counts = vec![0.0; t.len()];
    let mut ll = 0.0;
    for ((pll, post), slots) in per_pair.into_iter().zip(&idx.pair_slots) {
        ll += pll;
        for (&s, p) in slots.iter().zip(post) {
            counts[s as usize] += p;
        }
    }
    (ll, counts)
}

fn normalize_rows(idx: &SlotIndex, values: &mut [f64]) {
    for r in idx.row_starts.windows(2) {
        let row = &mut values[r[0]..r[1]];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
}

/// EM estimation of `p(f, c | e)` under uniform alignments, NULL included.
pub fn train_bilexical(
    tagged: &[TaggedPair],
    config: &TmTrainConfig,
) -> Result<(JointParams, EmHistory)> {
    if tagged.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    if config.max_iters == 0 {
        return Err(Error::Precondition("max_iters must be at least 1".into()));
    }
    let data = Interned::build(tagged)?;
    let idx = &data.slots;

    // Uniform start: each conditioner spreads its mass evenly over the events
    // it co-occurs with.
    let mut t = vec![0.0; idx.keys.len()];
    for r in idx.row_starts.windows(2) {
        let v = 1.0 / (r[1] - r[0]) as f64;
        t[r[0]..r[1]].iter_mut().for_each(|x| *x = v);
    }
    let mut history = EmHistory {
        log_likelihoods: Vec::new(),
        tokens: tagged.iter().map(|tp| tp.pair.french.len()).sum(),
    };
    let (ll, mut counts) = bilexical_e_step(idx, &t);
    history.log_likelihoods.push(ll);
    for iter in 1..=config.max_iters {
        t.copy_from_slice(&counts);
        normalize_rows(idx, &mut t);
        if config.prune_floor > 0.0 {
            t.iter_mut()
                .filter(|v| **v < config.prune_floor)
                .for_each(|v| *v = 0.0);
            normalize_rows(idx, &mut t);
        }
        let (ll, c) = bilexical_e_step(idx, &t);
        counts = c;
        history.log_likelihoods.push(ll);
        info!(
            "bi-lexical EM iteration {iter}: log-likelihood {ll:.6} ({:.6}/token)",
            ll / history.tokens as f64
        );
        if history.converged(config.rel_tol) {
            break;
        }
    }

    let mut joint = CondTable::default();
    for (&(e, ev), &p) in idx.keys.iter().zip(&t) {
        if p > 0.0 {
            let (f, c) = data.events[ev as usize];
            joint.insert(f, c, data.english[e as usize], p);
        }
    }
    Ok((JointParams(joint), history))
}

/// How sentence-conditioned and class-lexical probabilities are combined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothingConfig {
    /// `w · p(f|c,𝐞) + (1 − w) · p(f|c)`.
    Interpolate { weight: f64 },
    /// `max(p(f|c,𝐞), p(f|c))`.
    Maximum,
    /// `p(f|c,𝐞)` when `max_e p(f|c,e) / p(f|c,𝐞)` exceeds the threshold, else `p(f|c)`.
    ETest { threshold: f64 },
}

impl SmoothingConfig {
    pub const DEFAULT_WEIGHT: f64 = 0.85;
    pub const DEFAULT_THRESHOLD: f64 = 0.30;

    pub fn interpolate(weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Precondition(format!("interpolation weight {weight} outside [0, 1]")));
        }
        Ok(SmoothingConfig::Interpolate { weight })
    }

    pub fn e_test(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::Precondition(format!("e-test threshold {threshold} must be positive")));
        }
        Ok(SmoothingConfig::ETest { threshold })
    }

    /// Class-lexical probabilities only: the pure language model.
    pub fn pure_lm() -> Self {
        SmoothingConfig::Interpolate { weight: 0.0 }
    }

    /// Only interpolation yields a normalized distribution.
    pub fn is_normalized(&self) -> bool {
        matches!(self, SmoothingConfig::Interpolate { .. })
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig::Interpolate {
            weight: Self::DEFAULT_WEIGHT,
        }
    }
}

impl FromStr for SmoothingConfig {
    type Err = Error;

    /// `interp:W` | `max` | `etest:T`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Precondition(format!("bad smoothing spec {s:?}; expected interp:W, max or etest:T"));
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        match s.split_once(':') {
            None if s == "max" => Ok(SmoothingConfig::Maximum),
            Some(("interp", v)) => SmoothingConfig::interpolate(num(v)?),
            Some(("etest", v)) => SmoothingConfig::e_test(num(v)?),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SmoothingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothingConfig::Interpolate { weight } => write!(f, "interp:{weight}"),
            SmoothingConfig::Maximum => f.write_str("max"),
            SmoothingConfig::ETest { threshold } => write!(f, "etest:{threshold}"),
        }
    }
}

/// The tri-class model with sentence-conditioned lexical parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TransModel {
    pub bilexical: BiLexicalParams,
    pub lm: ClassLM,
}

impl TransModel {
    pub fn new(bilexical: BiLexicalParams, lm: ClassLM) -> Self {
        TransModel { bilexical, lm }
    }

    /// A model whose translation table is empty; every smoothing method then
    /// falls back on, or interpolates toward, the pure language model.
    pub fn lm_only(lm: ClassLM) -> Self {
        TransModel {
            bilexical: BiLexicalParams::default(),
            lm,
        }
    }

    pub fn scorer<'a>(&'a self, english: &[Token], cfg: SmoothingConfig) -> SentenceScorer<'a> {
        let rows = std::iter::once(self.bilexical.0.rows(None))
            .chain(english.iter().map(|e| self.bilexical.0.rows(Some(e.as_str()))))
            .collect();
        SentenceScorer {
            model: self,
            rows,
            cfg,
        }
    }
}

/// Bi-lexical lookups for one English sentence, NULL first.
pub struct SentenceScorer<'a> {
    model: &'a TransModel,
    rows: Vec<Option<&'a ClassRows>>,
    cfg: SmoothingConfig,
}

impl SentenceScorer<'_> {
    fn each<'s>(&'s self, f: &'s str, c: ClassId) -> impl Iterator<Item = f64> + 's {
        self.rows.iter().map(move |r| {
            r.and_then(|r| r.get(&c))
                .and_then(|m| m.get(f))
                .copied()
                .unwrap_or(0.0)
        })
    }

    /// `p(f | c, 𝐞)`: the average over NULL and every English position.
    pub fn translation(&self, f: &str, c: ClassId) -> f64 {
        self.each(f, c).sum::<f64>() / self.rows.len() as f64
    }

    /// `max_e p(f | c, e)` over NULL and the sentence's English words.
    pub fn best_single(&self, f: &str, c: ClassId) -> f64 {
        self.each(f, c).fold(0.0, f64::max)
    }

    pub fn smoothed(&self, f: &str, c: ClassId) -> f64 {
        let backoff = self.model.lm.lexical.prob(f, c);
        match self.cfg {
            SmoothingConfig::Interpolate { weight } => {
                weight * self.translation(f, c) + (1.0 - weight) * backoff
            }
            SmoothingConfig::Maximum => self.translation(f, c).max(backoff),
            SmoothingConfig::ETest { threshold } => {
                let avg = self.translation(f, c);
                if avg > 0.0 && self.best_single(f, c) / avg > threshold {
                    avg
                } else {
                    backoff
                }
            }
        }
    }

    /// `(class, ln smoothed)` for each lexicon class of `f` with nonzero score.
    pub(crate) fn emissions(&self, f: &str) -> Emissions {
        self.model
            .lm
            .lexicon
            .classes_of(f)
            .unwrap_or(&[])
            .iter()
            .filter_map(|&c| {
                let s = self.smoothed(f, c);
                (s > 0.0).then(|| (c.index(), s.ln()))
            })
            .collect()
    }
}

/// `p(f | c, 𝐞) = Σ_{j=0}^{|𝐞|} p(f | c, e_j) / (|𝐞| + 1)` with `e_0` = NULL.
pub fn sentence_lexical(f: &str, c: ClassId, english: &[Token], params: &BiLexicalParams) -> f64 {
    let total: f64 = std::iter::once(params.get(f, c, None))
        .chain(english.iter().map(|e| params.get(f, c, Some(e.as_str()))))
        .sum();
    total / (english.len() + 1) as f64
}

pub fn smoothed_score(
    f: &str,
    c: ClassId,
    english: &[Token],
    model: &TransModel,
    cfg: SmoothingConfig,
) -> f64 {
    model.scorer(english, cfg).smoothed(f, c)
}

/// `ln Σ_c Π_i p(c_i | c_{i-2}, c_{i-1}) · s(f_i, c_i, 𝐞)` with the end event,
/// where `s` is the smoothed score. With interpolation this is `ln p(f | e)`.
pub fn tm_sentence_logprob(pair: &SentencePair, model: &TransModel, cfg: SmoothingConfig) -> Result<f64> {
    model.lm.check_known(&pair.french)?;
    let scorer = model.scorer(&pair.english, cfg);
    let emissions: Vec<Emissions> = pair
        .french
        .iter()
        .map(|f| scorer.emissions(f.as_str()))
        .collect();
    let trellis = Trellis::new(&model.lm.contextual, &emissions);
    Ok(trellis.total(&trellis.forward()))
}

fn cond_label(e: Option<&str>) -> &str {
    e.unwrap_or(NULL_LABEL)
}

pub fn format_joint(joint: &JointParams, lexicon: &Lexicon) -> String {
    let mut out = String::from("BILEX v1\n");
    let _ = writeln!(out, "CLASSES {}", lexicon.class_names().join(","));
    for (f, c, e, p) in joint.iter_sorted() {
        let _ = writeln!(out, "J {f} {} {} {}", lexicon.class_name(c), cond_label(e), fmt_prob(p));
    }
    out
}

pub fn write_joint(path: impl AsRef<Path>, joint: &JointParams, lexicon: &Lexicon) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_joint(joint, lexicon)).map_err(|e| Error::io(path, e))
}

/// Parses a `BILEX v1` file into its class inventory and joint table.
pub fn parse_joint(origin: &str, bytes: &[u8]) -> Result<(Vec<String>, JointParams)> {
    let lines = utf8_lines(origin, bytes)?;
    let err = |line: usize, msg: String| Error::parse(origin, line, msg);
    if lines.first() != Some(&"BILEX v1") {
        return Err(err(1, "expected header `BILEX v1`".into()));
    }
    let names: Vec<String> = lines
        .get(1)
        .and_then(|l| l.strip_prefix("CLASSES "))
        .ok_or_else(|| err(2, "expected `CLASSES` line".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let inventory = Lexicon::new(names.clone()).map_err(|e| err(2, e.to_string()))?;
    let mut joint = JointParams::default();
    for (i, line) in lines.iter().enumerate().skip(2) {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(' ').collect();
        let ["J", f, class, e, p] = fields.as_slice() else {
            return Err(err(lineno, format!("unrecognized record {line:?}")));
        };
        let c = inventory
            .class_id(class)
            .ok_or_else(|| err(lineno, format!("unknown class label {class:?}")))?;
        let e = (*e != NULL_LABEL).then_some(*e);
        joint.insert(f, c, e, parse_prob(p).map_err(|m| err(lineno, m))?);
    }
    let worst = joint.max_row_error();
    if worst > ROW_TOLERANCE {
        return Err(err(lines.len(), format!("joint rows off by {worst:e}")));
    }
    Ok((names, joint))
}

pub fn load_joint(path: impl AsRef<Path>) -> Result<(Vec<String>, JointParams)> {
    let path = path.as_ref();
    parse_joint(&path.display().to_string(), &read_file(path)?)
}

/// Loads a `BILEX v1` file and pairs it with `lm`, checking the class inventories agree.
pub fn load_trans_model(path: impl AsRef<Path>, lm: ClassLM) -> Result<TransModel> {
    let (names, joint) = load_joint(&path)?;
    if names != lm.lexicon.class_names() {
        return Err(Error::Precondition(format!(
            "{}: class inventory differs from the language model's",
            path.as_ref().display()
        )));
    }
    Ok(TransModel::new(to_bilexical(&joint), lm))
}
