//! Two-stage search: prune each position's candidate list, then run a Viterbi
//! search over (candidate, class) pairs scored by acoustic log-score plus the
//! translation-conditioned class model.
//!
//! The class trigram only looks at classes, so for the suffix maximization the
//! candidates at a position collapse to their best score per class. The
//! forward pass then walks (rank, class) pairs in order and keeps the first one
//! whose best completion reaches the global optimum, which yields the
//! lexicographically smallest optimal path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{read_file, tokens, utf8_lines, ClassId, Lexicon, Token};
use crate::error::{Error, Result};
use crate::logspace::{fmt_prob, LOG_ZERO};
use crate::phonosim::{rank_order, NBestLattice};
use crate::transmodel::{SentenceScorer, SmoothingConfig, TransModel};
use crate::trellis::{Emissions, Trellis};

/// Paths whose scores differ by less than this, relative to the score
/// magnitude when that exceeds 1, count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

fn tie_threshold(best: f64) -> f64 {
    best - TIE_TOLERANCE * best.abs().max(1.0)
}

/// Exhaustive search refuses lattices with more paths than this.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub words: Vec<Token>,
    pub classes: Vec<ClassId>,
    /// Candidate rank chosen at each position.
    pub ranks: Vec<usize>,
    pub log_score: f64,
    /// Gap between the chosen (word, class) at each position and the best
    /// alternative there, given the chosen prefix.
    pub margins: Option<Vec<f64>>,
}

/// Keeps the best `n` candidates per position. Lists are first put in rank
/// order (score descending, then word ascending), so ties at the cut keep the
/// lexicographically smaller word. The true optimum may be cut away.
pub fn prune(lattice: &NBestLattice, n: usize) -> Result<NBestLattice> {
    if n == 0 {
        return Err(Error::Precondition("prune width must be at least 1".into()));
    }
    let mut out = NBestLattice::default();
    for (i, list) in lattice.positions.iter().enumerate() {
        let mut list = list.clone();
        list.sort_by(rank_order);
        list.truncate(n);
        let truth = lattice
            .truth
            .get(i)
            .copied()
            .flatten()
            .and_then(|r| lattice.positions[i].get(r))
            .and_then(|t| list.iter().position(|c| c.word == t.word));
        out.truth.push(truth);
        out.positions.push(list);
    }
    Ok(out)
}

/// Every admissible (rank, class, score) at one position, in (rank, class) order.
type Choices = Vec<(usize, usize, f64)>;

fn choices(lattice: &NBestLattice, scorer: &SentenceScorer<'_>, lexicon: &Lexicon, acw: f64) -> Result<Vec<Choices>> {
    if !(acw > 0.0 && acw.is_finite()) {
        return Err(Error::Precondition(format!("acoustic weight must be positive, got {acw}")));
    }
    lattice
        .positions
        .iter()
        .enumerate()
        .map(|(i, list)| {
            if list.is_empty() {
                return Err(Error::Precondition(format!("position {i} has no candidates")));
            }
            let mut out = Vec::new();
            for (rank, cand) in list.iter().enumerate() {
                for &c in lexicon.classes_of(&cand.word).unwrap_or(&[]) {
                    let s = scorer.smoothed(&cand.word, c);
                    let v = acw * cand.score + s.ln();
                    if s > 0.0 && v.is_finite() {
                        out.push((rank, c.index(), v));
                    }
                }
            }
            if out.is_empty() {
                return Err(Error::NoPath { position: i });
            }
            Ok(out)
        })
        .collect()
}

/// Best score per class, sorted by class.
fn collapse(choices: &Choices, num_classes: usize) -> Emissions {
    let mut best = vec![LOG_ZERO; num_classes];
    for &(_, c, v) in choices {
        best[c] = best[c].max(v);
    }
    best.into_iter()
        .enumerate()
        .filter(|&(_, v)| v > LOG_ZERO)
        .collect()
}

fn result(lattice: &NBestLattice, ranks: Vec<usize>, classes: Vec<usize>, log_score: f64, margins: Option<Vec<f64>>) -> DecodeResult {
    DecodeResult {
        words: ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| Token::new(lattice.positions[i][r].word.clone()).expect("lattice words are tokens"))
            .collect(),
        classes: classes.into_iter().map(|c| ClassId(c as u16)).collect(),
        ranks,
        log_score,
        margins,
    }
}

pub fn decode(
    lattice: &NBestLattice,
    english: &[Token],
    model: &TransModel,
    cfg: SmoothingConfig,
    acoustic_weight: f64,
) -> Result<DecodeResult> {
    if lattice.is_empty() {
        return Err(Error::Precondition("empty lattice".into()));
    }
    let scorer = model.scorer(english, cfg);
    let choices = choices(lattice, &scorer, &model.lm.lexicon, acoustic_weight)?;
    let ctx = &model.lm.contextual;
    let c = ctx.num_classes();
    let emissions: Vec<Emissions> = choices.iter().map(|ch| collapse(ch, c)).collect();
    let trellis = Trellis::new(ctx, &emissions);
    let suffix = trellis.backward_max();
    let n = lattice.len();
    let state = |a: usize, b: usize| a * (c + 1) + b;

    let mut global = LOG_ZERO;
    for &(k, em) in &emissions[0] {
        global = global.max(ctx.log_prob_raw(c, c, k) + em + suffix[0][state(c, k)]);
    }
    if global == LOG_ZERO {
        return Err(Error::NoPath { position: 0 });
    }
    let threshold = tie_threshold(global);

    let (mut a, mut b) = (c, c);
    let mut prefix = 0.0;
    let (mut ranks, mut classes, mut margins) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, position) in choices.iter().enumerate() {
        let scored: Vec<(usize, usize, f64, f64)> = position
            .iter()
            .map(|&(rank, k, v)| {
                let step = ctx.log_prob_raw(a, b, k) + v;
                (rank, k, step, prefix + step + suffix[i][state(b, k)])
            })
            .collect();
        // Rounding can leave the optimum a hair under the threshold; the
        // position's argmax is then the right choice.
        let pick = scored
            .iter()
            .position(|x| x.3 >= threshold)
            .or_else(|| {
                (0..scored.len())
                    .filter(|&j| scored[j].3 > LOG_ZERO)
                    .max_by(|&x, &y| scored[x].3.total_cmp(&scored[y].3).then(y.cmp(&x)))
            })
            .ok_or(Error::NoPath { position: i })?;
        let (rank, k, step, total) = scored[pick];
        let best_other = scored
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != pick)
            .map(|(_, x)| x.3)
            .fold(LOG_ZERO, f64::max);
        margins.push(total - best_other);
        ranks.push(rank);
        classes.push(k);
        prefix += step;
        a = b;
        b = k;
    }
    prefix += ctx.log_prob_raw(a, b, c);
    Ok(result(lattice, ranks, classes, prefix, Some(margins)))
}

/// The decoding objective for a given path; candidates are looked up by word.
pub fn score_path(
    lattice: &NBestLattice,
    english: &[Token],
    model: &TransModel,
    cfg: SmoothingConfig,
    acoustic_weight: f64,
    words: &[Token],
    classes: &[ClassId],
) -> Result<f64> {
    if words.len() != lattice.len() || classes.len() != lattice.len() {
        return Err(Error::Precondition("path length differs from lattice length".into()));
    }
    let scorer = model.scorer(english, cfg);
    let ctx = &model.lm.contextual;
    let c = ctx.num_classes();
    let (mut a, mut b) = (c, c);
    let mut total = 0.0;
    for (i, (w, k)) in words.iter().zip(classes).enumerate() {
        let cand = lattice.positions[i]
            .iter()
            .find(|x| x.word == w.as_str())
            .ok_or_else(|| Error::Precondition(format!("{w} is not a candidate at position {i}")))?;
        let admissible = model.lm.lexicon.classes_of(w.as_str()).is_some_and(|cs| cs.contains(k));
        if !admissible {
            return Ok(LOG_ZERO);
        }
        total += acoustic_weight * cand.score + ctx.log_prob_raw(a, b, k.index()) + scorer.smoothed(w.as_str(), *k).ln();
        a = b;
        b = k.index();
    }
    Ok(total + ctx.log_prob_raw(a, b, c))
}

/// Exhaustive search in (rank₁, class₁, rank₂, class₂, …) order, keeping the
/// first path within the tie tolerance of the maximum.
pub fn brute_force_decode(
    lattice: &NBestLattice,
    english: &[Token],
    model: &TransModel,
    cfg: SmoothingConfig,
    acoustic_weight: f64,
) -> Result<DecodeResult> {
    if lattice.is_empty() {
        return Err(Error::Precondition("empty lattice".into()));
    }
    let c = model.lm.num_classes();
    let size: f64 = lattice
        .positions
        .iter()
        .map(|l| (l.len() * c) as f64)
        .product();
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::GuardExceeded {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let scorer = model.scorer(english, cfg);
    let choices = choices(lattice, &scorer, &model.lm.lexicon, acoustic_weight)?;
    let ctx = &model.lm.contextual;

    let mut paths: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut stack: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((path, score)) = stack.pop() {
        let i = path.len();
        let class_at = |j: isize| if j < 0 { c } else { choices[j as usize][path[j as usize]].1 };
        let (a, b) = (class_at(i as isize - 2), class_at(i as isize - 1));
        if i == choices.len() {
            paths.push((path.clone(), score + ctx.log_prob_raw(a, b, c)));
            continue;
        }
        for (j, &(_, k, v)) in choices[i].iter().enumerate().rev() {
            let mut next = path.clone();
            next.push(j);
            stack.push((next, score + ctx.log_prob_raw(a, b, k) + v));
        }
    }
    let best = paths.iter().map(|p| p.1).fold(LOG_ZERO, f64::max);
    if best == LOG_ZERO {
        return Err(Error::NoPath { position: 0 });
    }
    let (path, score) = paths
        .into_iter()
        .find(|p| p.1 >= tie_threshold(best))
        .expect("maximum is attained");
    let ranks = path.iter().enumerate().map(|(i, &j)| choices[i][j].0).collect();
    let classes = path.iter().enumerate().map(|(i, &j)| choices[i][j].1).collect();
    Ok(result(lattice, ranks, classes, score, None))
}

/// Decodes many sentences in parallel; results are in input order.
pub fn decode_corpus(
    lattices: &[NBestLattice],
    english: &[Vec<Token>],
    model: &TransModel,
    cfg: SmoothingConfig,
    acoustic_weight: f64,
) -> Vec<Result<DecodeResult>> {
    lattices
        .par_iter()
        .zip(english.par_iter())
        .map(|(l, e)| decode(l, e, model, cfg, acoustic_weight))
        .collect()
}

/// `hyp-tokens<TAB>class-labels<TAB>logscore`.
pub fn format_decode_line(result: &DecodeResult, lexicon: &Lexicon) -> String {
    let words: Vec<&str> = result.words.iter().map(Token::as_str).collect();
    let classes: Vec<&str> = result.classes.iter().map(|&c| lexicon.class_name(c)).collect();
    let mut out = String::new();
    let _ = write!(out, "{}\t{}\t{}", words.join(" "), classes.join(" "), fmt_prob(result.log_score));
    out
}

pub fn write_decodes(path: impl AsRef<Path>, results: &[DecodeResult], lexicon: &Lexicon) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in results {
        text.push_str(&format_decode_line(r, lexicon));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads the hypothesis column of a decode output file.
pub fn load_hypotheses(path: impl AsRef<Path>) -> Result<Vec<Vec<Token>>> {
    let path = path.as_ref();
    parse_hypotheses(&path.display().to_string(), &read_file(path)?)
}

pub fn parse_hypotheses(origin: &str, bytes: &[u8]) -> Result<Vec<Vec<Token>>> {
    utf8_lines(origin, bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let hyp = line.split('\t').next().unwrap_or_default();
            tokens(hyp).map_err(|e| Error::parse(origin, i + 1, e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classlm::{ContextualParams, LexicalParams};
    use crate::phonosim::Candidate;
    use crate::ClassLM;

    fn cand(word: &str, score: f64) -> Candidate {
        Candidate {
            word: word.into(),
            score,
        }
    }

    fn toy_model() -> TransModel {
        let mut lexicon = Lexicon::new(vec!["A".into(), "B".into()]).unwrap();
        lexicon.insert("x", [ClassId(0), ClassId(1)]).unwrap();
        lexicon.insert("y", [ClassId(1)]).unwrap();
        let mut lexical = LexicalParams::default();
        lexical.insert("x", ClassId(0), 1.0);
        lexical.insert("x", ClassId(1), 0.25);
        lexical.insert("y", ClassId(1), 0.75);
        TransModel::lm_only(ClassLM {
            contextual: ContextualParams::uniform(2),
            lexical,
            lexicon,
        })
    }

    #[test]
    fn single_candidate_picks_the_better_class() {
        let model = toy_model();
        let lat = NBestLattice {
            positions: vec![vec![cand("x", -1.0)]],
            truth: vec![Some(0)],
        };
        let r = decode(&lat, &[], &model, SmoothingConfig::pure_lm(), 1.0).unwrap();
        assert_eq!(r.classes, vec![ClassId(0)]);
        // -1 + ln(1/3) + ln 1 + ln(1/3)
        let want = -1.0 + 2.0 * (1.0f64 / 3.0).ln();
        assert!((r.log_score - want).abs() < 1e-12);
        let margin = r.margins.unwrap()[0];
        assert!((margin - (1.0f64 / 0.25).ln()).abs() < 1e-12);
    }

    #[test]
    fn prune_keeps_the_smaller_word_on_ties() {
        let lat = NBestLattice {
            positions: vec![vec![cand("b", -1.0), cand("c", -1.0), cand("a", -1.0), cand("d", 0.0)]],
            truth: vec![Some(2)],
        };
        let p = prune(&lat, 2).unwrap();
        let words: Vec<&str> = p.positions[0].iter().map(|c| c.word.as_str()).collect();
        assert_eq!(words, ["d", "a"]);
        assert_eq!(p.truth, vec![Some(1)]);
        assert_eq!(prune(&lat, 1).unwrap().positions[0].len(), 1);
        assert!(prune(&lat, 0).is_err());
        let wide = prune(&p, 10).unwrap();
        assert_eq!(wide, p);
    }

    #[test]
    fn unknown_candidates_are_skipped_and_dead_positions_reported() {
        let model = toy_model();
        let lat = NBestLattice {
            positions: vec![vec![cand("zz", 0.0), cand("y", -3.0)], vec![cand("zz", 0.0)]],
            truth: vec![None, None],
        };
        assert!(matches!(
            decode(&lat, &[], &model, SmoothingConfig::pure_lm(), 1.0),
            Err(Error::NoPath { position: 1 })
        ));
        let lat = NBestLattice {
            positions: vec![lat.positions[0].clone()],
            truth: vec![None],
        };
        let r = decode(&lat, &[], &model, SmoothingConfig::pure_lm(), 1.0).unwrap();
        assert_eq!(r.words, tokens("y").unwrap());
        assert_eq!(r.ranks, vec![1]);
    }

    #[test]
    fn brute_force_guard() {
        let model = toy_model();
        let list: Vec<Candidate> = (0..20).map(|i| cand(if i % 2 == 0 { "x" } else { "y" }, -(i as f64))).collect();
        let lat = NBestLattice {
            positions: vec![list; 20],
            truth: vec![None; 20],
        };
        assert!(matches!(
            brute_force_decode(&lat, &[], &model, SmoothingConfig::pure_lm(), 1.0),
            Err(Error::GuardExceeded { .. })
        ));
    }

    #[test]
    fn output_line() {
        let model = toy_model();
        let lat = NBestLattice {
            positions: vec![vec![cand("x", 0.0)], vec![cand("y", 0.0)]],
            truth: vec![Some(0), Some(0)],
        };
        let r = decode(&lat, &[], &model, SmoothingConfig::pure_lm(), 1.0).unwrap();
        let line = format_decode_line(&r, &model.lm.lexicon);
        assert!(line.starts_with("x y\tA B\t-"), "{line}");
        let hyps = parse_hypotheses("t", format!("{line}\n").as_bytes()).unwrap();
        assert_eq!(hyps, vec![r.words]);
    }
}
