//! Tri-class French language model.
//!
//! A sentence is generated by drawing each class from the two preceding
//! classes, `p(c_i | c_{i-2}, c_{i-1})`, and each word from its class,
//! `p(f | c)`. Two boundary classes precede every sentence and an end event
//! closes it. Training is EM (forward-backward) over class sequences
//! restricted to each word's lexicon classes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::corpus::{read_file, utf8_lines, ClassId, Lexicon, Token};
use crate::em::EmHistory;
use crate::error::{Error, Result};
use crate::logspace::{fmt_prob, ln};
use crate::trellis::{Emissions, Trellis};

/// Sentences per work unit in the E-step. Fixed so that the reduction order,
/// and therefore every bit of the result, is independent of the thread count.
pub(crate) const EM_CHUNK: usize = 64;

/// Normalization tolerance for parameter rows.
pub const ROW_TOLERANCE: f64 = 1e-9;

const BOUNDARY_LABEL: &str = "<B>";
const END_LABEL: &str = "<E>";

/// Dense class-trigram table `p(next | prev2, prev1)`.
///
/// Contexts range over the `C` real classes plus the boundary class; successors
/// over the `C` real classes plus the end event. Every row sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualParams {
    c: usize,
    probs: Vec<f64>,
    logs: Vec<f64>,
}

impl ContextualParams {
    pub fn uniform(num_classes: usize) -> Self {
        let width = num_classes + 1;
        let probs = vec![1.0 / width as f64; width * width * width];
        Self::from_probs(num_classes, probs)
    }

    /// Builds a table from `(C+1)^3` probabilities laid out as
    /// `[prev2][prev1][next]`, where index `C` is the boundary class in context
    /// positions and the end event in the successor position.
    pub fn from_table(num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        let width = num_classes + 1;
        if probs.len() != width * width * width {
            return Err(Error::Precondition(format!(
                "contextual table needs {} entries, got {}",
                width * width * width,
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Precondition("probability outside [0, 1]".into()));
        }
        let table = Self::from_probs(num_classes, probs);
        let err = table.max_row_error();
        if err > ROW_TOLERANCE {
            return Err(Error::Precondition(format!("row sums off by {err:e}")));
        }
        Ok(table)
    }

    fn from_probs(c: usize, probs: Vec<f64>) -> Self {
        let logs = probs.iter().map(|&p| ln(p)).collect();
        ContextualParams { c, probs, logs }
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    #[inline]
    pub(crate) fn index(&self, a: usize, b: usize, s: usize) -> usize {
        let w = self.c + 1;
        (a * w + b) * w + s
    }

    /// `None` stands for the boundary class in context positions and for the
    /// end event in the successor position.
    pub fn prob(&self, prev2: Option<ClassId>, prev1: Option<ClassId>, next: Option<ClassId>) -> f64 {
        let slot = |c: Option<ClassId>| c.map_or(self.c, ClassId::index);
        self.probs[self.index(slot(prev2), slot(prev1), slot(next))]
    }

    #[inline]
    pub(crate) fn prob_raw(&self, a: usize, b: usize, s: usize) -> f64 {
        self.probs[self.index(a, b, s)]
    }

    #[inline]
    pub(crate) fn log_prob_raw(&self, a: usize, b: usize, s: usize) -> f64 {
        self.logs[self.index(a, b, s)]
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_error(&self) -> f64 {
        self.probs
            .chunks(self.c + 1)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Re-estimates every row from expected counts; rows without counts are kept.
    fn reestimate(&mut self, counts: &[f64]) {
        let w = self.c + 1;
        for (row, cnt) in self.probs.chunks_mut(w).zip(counts.chunks(w)) {
            let total: f64 = cnt.iter().sum();
            if total > 0.0 {
                for (p, &n) in row.iter_mut().zip(cnt) {
                    *p = n / total;
                }
            }
        }
        self.logs = self.probs.iter().map(|&p| ln(p)).collect();
    }

    /// Add-λ smoothing: every entry gains `lambda` before its row is renormalized.
    pub fn smooth(&mut self, lambda: f64) {
        if lambda <= 0.0 {
            return;
        }
        let w = self.c + 1;
        for row in self.probs.chunks_mut(w) {
            let total: f64 = row.iter().sum::<f64>() + lambda * w as f64;
            for p in row.iter_mut() {
                *p = (*p + lambda) / total;
            }
        }
        self.logs = self.probs.iter().map(|&p| ln(p)).collect();
    }
}

/// Sparse `p(f | c)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LexicalParams {
    table: HashMap<String, Vec<(ClassId, f64)>>,
}

impl LexicalParams {
    pub fn prob(&self, word: &str, class: ClassId) -> f64 {
        self.table
            .get(word)
            .and_then(|v| v.iter().find(|(c, _)| *c == class))
            .map_or(0.0, |&(_, p)| p)
    }

    /// Nonzero entries for `word`, in class order.
    pub fn entries(&self, word: &str) -> &[(ClassId, f64)] {
        self.table.get(word).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.table.len()
    }

    /// `(word, class, prob)` sorted by word then class.
    pub fn iter_sorted(&self) -> Vec<(&str, ClassId, f64)> {
        let mut words: Vec<&String> = self.table.keys().collect();
        words.sort();
        words
            .into_iter()
            .flat_map(|w| self.table[w].iter().map(move |&(c, p)| (w.as_str(), c, p)))
            .collect()
    }

    /// Σ_f p(f|c) for each class, summed in word order.
    pub fn class_sums(&self, num_classes: usize) -> Vec<f64> {
        let mut sums = vec![0.0; num_classes];
        for (_, c, p) in self.iter_sorted() {
            sums[c.index()] += p;
        }
        sums
    }

    /// Largest deviation from one over classes with any support.
    pub fn max_row_error(&self, num_classes: usize) -> f64 {
        self.class_sums(num_classes)
            .into_iter()
            .filter(|&s| s > 0.0)
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn insert(&mut self, word: &str, class: ClassId, p: f64) {
        let row = self.table.entry(word.to_string()).or_default();
        match row.binary_search_by_key(&class, |&(c, _)| c) {
            Ok(i) => row[i].1 = p,
            Err(i) => row.insert(i, (class, p)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassLM {
    pub contextual: ContextualParams,
    pub lexical: LexicalParams,
    pub lexicon: Lexicon,
}

#[derive(Clone, Debug)]
pub struct LmTrainConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Add-λ applied to the contextual table once training ends.
    pub smoothing_lambda: f64,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        LmTrainConfig {
            max_iters: 20,
            rel_tol: 1e-4,
            smoothing_lambda: 1e-6,
        }
    }
}

/// Interned training corpus with per-word admissible classes.
struct LmCorpus {
    sentences: Vec<Vec<usize>>,
    words: Vec<String>,
    classes: Vec<Vec<ClassId>>,
    /// Offset of each word's first slot in the flat lexical parameter vector.
    offsets: Vec<usize>,
    n_slots: usize,
}

impl LmCorpus {
    fn build(sentences: &[Vec<Token>], lexicon: &Lexicon) -> Result<(Self, Lexicon)> {
        let mut lexicon = lexicon.clone();
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut words = Vec::new();
        let mut classes: Vec<Vec<ClassId>> = Vec::new();
        let mut interned = Vec::with_capacity(sentences.len());
        for (k, sent) in sentences.iter().enumerate() {
            if sent.is_empty() {
                return Err(Error::Precondition(format!("training sentence {k} is empty")));
            }
            let mut row = Vec::with_capacity(sent.len());
            for tok in sent {
                let id = *ids.entry(tok.as_str()).or_insert_with(|| {
                    words.push(tok.as_str().to_string());
                    classes.push(Vec::new());
                    words.len() - 1
                });
                row.push(id);
            }
            interned.push(row);
        }
        for (w, word) in words.iter().enumerate() {
            classes[w] = match lexicon.classes_of(word) {
                Some(cs) => cs.to_vec(),
                None => {
                    warn!("{word:?} is not in the lexicon; allowing every class");
                    let all: Vec<ClassId> = lexicon.all_classes().collect();
                    lexicon.insert(word, all.iter().copied())?;
                    all
                }
            };
            if classes[w].is_empty() {
                return Err(Error::Precondition(format!("{word:?} has no admissible class")));
            }
        }
        let mut offsets = Vec::with_capacity(words.len());
        let mut n_slots = 0;
        for cs in &classes {
            offsets.push(n_slots);
            n_slots += cs.len();
        }
        Ok((
            LmCorpus {
                sentences: interned,
                words,
                classes,
                offsets,
                n_slots,
            },
            lexicon,
        ))
    }

    fn tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

struct EStep {
    log_likelihood: f64,
    ctx_counts: Vec<f64>,
    lex_counts: Vec<f64>,
}

impl EStep {
    fn zeros(ctx_len: usize, lex_len: usize) -> Self {
        EStep {
            log_likelihood: 0.0,
            ctx_counts: vec![0.0; ctx_len],
            lex_counts: vec![0.0; lex_len],
        }
    }

    fn absorb(&mut self, other: EStep) {
        self.log_likelihood += other.log_likelihood;
        for (a, b) in self.ctx_counts.iter_mut().zip(other.ctx_counts) {
            *a += b;
        }
        for (a, b) in self.lex_counts.iter_mut().zip(other.lex_counts) {
            *a += b;
        }
    }
}

fn e_step(corpus: &LmCorpus, ctx: &ContextualParams, lex: &[f64]) -> Result<EStep> {
    let ctx_len = ctx.probs.len();
    let partials: Vec<Result<EStep>> = corpus
        .sentences
        .par_chunks(EM_CHUNK)
        .map(|chunk| {
            let mut acc = EStep::zeros(ctx_len, corpus.n_slots);
            for sent in chunk {
                let emissions: Vec<Emissions> = sent
                    .iter()
                    .map(|&w| {
                        corpus.classes[w]
                            .iter()
                            .enumerate()
                            .filter_map(|(k, c)| {
                                let p = lex[corpus.offsets[w] + k];
                                (p > 0.0).then(|| (c.index(), p.ln()))
                            })
                            .collect()
                    })
                    .collect();
                let trellis = Trellis::new(ctx, &emissions);
                let (z, post) = trellis.expected_counts(&mut acc.ctx_counts).ok_or_else(|| {
                    Error::Invariant("training sentence has zero probability".into())
                })?;
                acc.log_likelihood += z;
                for (&w, pos) in sent.iter().zip(post) {
                    for (c, g) in pos {
                        let k = corpus.classes[w]
                            .iter()
                            .position(|x| x.index() == c)
                            .expect("posterior class is admissible");
                        acc.lex_counts[corpus.offsets[w] + k] += g;
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = EStep::zeros(ctx_len, corpus.n_slots);
    for p in partials {
        total.absorb(p?);
    }
    Ok(total)
}

/// Trains the tri-class model by EM. Returns the model and its likelihood history.
pub fn train_class_lm(
    sentences: &[Vec<Token>],
    lexicon: &Lexicon,
    config: &LmTrainConfig,
) -> Result<(ClassLM, EmHistory)> {
    if config.max_iters == 0 {
        return Err(Error::Precondition("max_iters must be at least 1".into()));
    }
    if sentences.is_empty() {
        return Err(Error::Precondition("empty training corpus".into()));
    }
    let c = lexicon.num_classes();
    let (corpus, lexicon) = LmCorpus::build(sentences, lexicon)?;

    let mut ctx = ContextualParams::uniform(c);
    let mut lex = initial_lexical(&corpus, c);
    let mut history = EmHistory {
        log_likelihoods: Vec::new(),
        tokens: corpus.tokens(),
    };

    let mut stats = e_step(&corpus, &ctx, &lex)?;
    history.log_likelihoods.push(stats.log_likelihood);
    for iter in 1..=config.max_iters {
        ctx.reestimate(&stats.ctx_counts);
        reestimate_lexical(&corpus, c, &mut lex, &stats.lex_counts);
        stats = e_step(&corpus, &ctx, &lex)?;
        history.log_likelihoods.push(stats.log_likelihood);
        info!(
            "class LM EM iteration {iter}: log-likelihood {:.6} ({:.6}/token)",
            stats.log_likelihood,
            stats.log_likelihood / history.tokens as f64
        );
        if history.converged(config.rel_tol) {
            debug!("class LM EM converged after {iter} iterations");
            break;
        }
    }
    ctx.smooth(config.smoothing_lambda);

    let mut lexical = LexicalParams::default();
    for (w, word) in corpus.words.iter().enumerate() {
        for (k, &cls) in corpus.classes[w].iter().enumerate() {
            let p = lex[corpus.offsets[w] + k];
            if p > 0.0 {
                lexical.insert(word, cls, p);
            }
        }
    }
    Ok((
        ClassLM {
            contextual: ctx,
            lexical,
            lexicon,
        },
        history,
    ))
}

/// p(f|c) uniform over the training words that admit class c.
fn initial_lexical(corpus: &LmCorpus, c: usize) -> Vec<f64> {
    let mut per_class = vec![0usize; c];
    for cs in &corpus.classes {
        for cls in cs {
            per_class[cls.index()] += 1;
        }
    }
    let mut lex = vec![0.0; corpus.n_slots];
    for (w, cs) in corpus.classes.iter().enumerate() {
        for (k, cls) in cs.iter().enumerate() {
            lex[corpus.offsets[w] + k] = 1.0 / per_class[cls.index()] as f64;
        }
    }
    lex
}

fn reestimate_lexical(corpus: &LmCorpus, c: usize, lex: &mut [f64], counts: &[f64]) {
    let mut totals = vec![0.0; c];
    for (w, cs) in corpus.classes.iter().enumerate() {
        for (k, cls) in cs.iter().enumerate() {
            totals[cls.index()] += counts[corpus.offsets[w] + k];
        }
    }
    for (w, cs) in corpus.classes.iter().enumerate() {
        for (k, cls) in cs.iter().enumerate() {
            let t = totals[cls.index()];
            if t > 0.0 {
                lex[corpus.offsets[w] + k] = counts[corpus.offsets[w] + k] / t;
            }
        }
    }
}

impl ClassLM {
    pub fn num_classes(&self) -> usize {
        self.contextual.num_classes()
    }

    /// Per-position `(class, ln p(f|c))` for the classes the lexicon allows.
    pub(crate) fn emissions(&self, sentence: &[Token]) -> Result<Vec<Emissions>> {
        self.check_known(sentence)?;
        Ok(sentence
            .iter()
            .map(|tok| {
                let allowed = self.lexicon.classes_of(tok.as_str()).unwrap_or(&[]);
                self.lexical
                    .entries(tok.as_str())
                    .iter()
                    .filter(|(c, p)| *p > 0.0 && allowed.contains(c))
                    .map(|&(c, p)| (c.index(), p.ln()))
                    .collect()
            })
            .collect())
    }

    pub(crate) fn check_known(&self, sentence: &[Token]) -> Result<()> {
        let mut unknown: Vec<String> = sentence
            .iter()
            .filter(|t| !self.lexicon.contains(t.as_str()))
            .map(|t| t.to_string())
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            unknown.dedup();
            Err(Error::UnknownWords(unknown))
        }
    }

    /// Checks both parameter tables against their row-sum invariants.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let ctx = self.contextual.max_row_error();
        let lex = self.lexical.max_row_error(self.num_classes());
        if ctx > tol || lex > tol {
            return Err(Error::Invariant(format!(
                "row sums off by {ctx:e} (contextual) / {lex:e} (lexical)"
            )));
        }
        Ok(())
    }
}

/// Most likely class sequence for `sentence`, with its log-score.
pub fn tag_with_score(sentence: &[Token], lm: &ClassLM) -> Result<(Vec<ClassId>, f64)> {
    let emissions = lm.emissions(sentence)?;
    if let Some(position) = emissions.iter().position(Vec::is_empty) {
        return Err(Error::NoPath { position });
    }
    let (path, score) = Trellis::new(&lm.contextual, &emissions)
        .viterbi()
        .ok_or(Error::NoPath { position: 0 })?;
    Ok((path.into_iter().map(|c| ClassId(c as u16)).collect(), score))
}

/// Viterbi class sequence under `p(c) · Π p(f_i|c_i)`; exact ties go to the
/// lexicographically smallest sequence.
pub fn tag(sentence: &[Token], lm: &ClassLM) -> Result<Vec<ClassId>> {
    tag_with_score(sentence, lm).map(|(p, _)| p)
}

/// `ln Σ_c Π_i p(c_i|c_{i-2},c_{i-1}) p(f_i|c_i)` including the end event.
/// Zero probability is reported as `f64::NEG_INFINITY`.
pub fn lm_sentence_logprob(sentence: &[Token], lm: &ClassLM) -> Result<f64> {
    let emissions = lm.emissions(sentence)?;
    let trellis = Trellis::new(&lm.contextual, &emissions);
    Ok(trellis.total(&trellis.forward()))
}

fn class_label(lex: &Lexicon, slot: usize, special: &'static str) -> String {
    if slot == lex.num_classes() {
        special.to_string()
    } else {
        lex.class_name(ClassId(slot as u16)).to_string()
    }
}

pub fn format_class_lm(lm: &ClassLM) -> String {
    let lex = &lm.lexicon;
    let c = lm.num_classes();
    let mut out = String::from("TRICLASS v1\n");
    let _ = writeln!(out, "CLASSES {}", lex.class_names().join(","));
    for (word, classes) in lex.iter() {
        let _ = writeln!(out, "WORD {word} {}", lex.format_classes(classes));
    }
    for a in 0..=c {
        for b in 0..=c {
            for s in 0..=c {
                let _ = writeln!(
                    out,
                    "CTX {} {} {} {}",
                    class_label(lex, a, BOUNDARY_LABEL),
                    class_label(lex, b, BOUNDARY_LABEL),
                    class_label(lex, s, END_LABEL),
                    fmt_prob(lm.contextual.prob_raw(a, b, s))
                );
            }
        }
    }
    for (word, cls, p) in lm.lexical.iter_sorted() {
        let _ = writeln!(out, "LEX {word} {} {}", lex.class_name(cls), fmt_prob(p));
    }
    out
}

pub fn write_class_lm(path: impl AsRef<Path>, lm: &ClassLM) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_class_lm(lm)).map_err(|e| Error::io(path, e))
}

pub fn load_class_lm(path: impl AsRef<Path>) -> Result<ClassLM> {
    let path = path.as_ref();
    parse_class_lm(&path.display().to_string(), &read_file(path)?)
}

pub fn parse_class_lm(origin: &str, bytes: &[u8]) -> Result<ClassLM> {
    let lines = utf8_lines(origin, bytes)?;
    let err = |line: usize, msg: String| Error::parse(origin, line, msg);
    if lines.first() != Some(&"TRICLASS v1") {
        return Err(err(1, "expected header `TRICLASS v1`".into()));
    }
    let names = lines
        .get(1)
        .and_then(|l| l.strip_prefix("CLASSES "))
        .ok_or_else(|| err(2, "expected `CLASSES` line".into()))?;
    let mut lexicon = Lexicon::new(names.split(',').map(str::to_string).collect())
        .map_err(|e| err(2, e.to_string()))?;
    let c = lexicon.num_classes();
    let slot = |name: &str, special: &str, lexicon: &Lexicon| -> Option<usize> {
        if name == special {
            Some(c)
        } else {
            lexicon.class_id(name).map(ClassId::index)
        }
    };
    let mut probs = vec![f64::NAN; (c + 1).pow(3)];
    let mut lexical = LexicalParams::default();
    for (i, line) in lines.iter().enumerate().skip(2) {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(' ').collect();
        match fields.as_slice() {
            ["WORD", word, classes] => {
                let ids = lexicon.parse_classes(classes).map_err(|m| err(lineno, m))?;
                lexicon.insert(word, ids).map_err(|e| err(lineno, e.to_string()))?;
            }
            ["CTX", a, b, s, p] => {
                let (a, b, s) = match (
                    slot(a, BOUNDARY_LABEL, &lexicon),
                    slot(b, BOUNDARY_LABEL, &lexicon),
                    slot(s, END_LABEL, &lexicon),
                ) {
                    (Some(a), Some(b), Some(s)) => (a, b, s),
                    _ => return Err(err(lineno, "unknown class label".into())),
                };
                let w = c + 1;
                probs[(a * w + b) * w + s] = parse_prob(p).map_err(|m| err(lineno, m))?;
            }
            ["LEX", word, class, p] => {
                let cls = lexicon
                    .class_id(class)
                    .ok_or_else(|| err(lineno, format!("unknown class label {class:?}")))?;
                lexical.insert(word, cls, parse_prob(p).map_err(|m| err(lineno, m))?);
            }
            _ => return Err(err(lineno, format!("unrecognized record {line:?}"))),
        }
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(err(lines.len(), "incomplete CTX table".into()));
    }
    let lm = ClassLM {
        contextual: ContextualParams::from_probs(c, probs),
        lexical,
        lexicon,
    };
    lm.check_normalized(ROW_TOLERANCE)
        .map_err(|e| err(lines.len(), e.to_string()))?;
    Ok(lm)
}

pub(crate) fn parse_prob(s: &str) -> std::result::Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("bad probability {s:?}"))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("probability {p} out of range"));
    }
    Ok(p)
}
