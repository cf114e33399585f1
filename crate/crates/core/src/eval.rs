//! Positional word accuracy with content/function error accounting, and
//! per-token perplexity.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::classlm::{tag, ClassLM};
use crate::corpus::{ClassId, Lexicon, SentencePair, Token};
use crate::error::{Error, Result};
use crate::logspace::fmt_prob;
use crate::transmodel::{tm_sentence_logprob, SmoothingConfig, TransModel};

/// Class labels whose words count as content words when present in the inventory.
pub const DEFAULT_CONTENT_CLASSES: [&str; 6] = ["NOUN", "VERB", "ADJ", "ADV", "PROPER", "NUM"];

pub fn default_content_classes(lexicon: &Lexicon) -> BTreeSet<ClassId> {
    DEFAULT_CONTENT_CLASSES
        .iter()
        .filter_map(|n| lexicon.class_id(n))
        .collect()
}

/// Parses comma-separated class labels against the lexicon's inventory.
pub fn parse_content_classes(spec: &str, lexicon: &Lexicon) -> Result<BTreeSet<ClassId>> {
    spec.split(',')
        .map(|n| {
            lexicon
                .class_id(n.trim())
                .ok_or_else(|| Error::Precondition(format!("unknown class {n:?}")))
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub words_total: usize,
    pub words_correct: usize,
    pub content_errors: usize,
    pub function_errors: usize,
    /// Reference tokens made only of punctuation; included in the totals above.
    pub punctuation_total: usize,
    pub punctuation_correct: usize,
    pub perplexity: Option<f64>,
}

impl EvalReport {
    pub fn errors(&self) -> usize {
        self.words_total - self.words_correct
    }

    pub fn accuracy(&self) -> f64 {
        if self.words_total == 0 {
            return 0.0;
        }
        self.words_correct as f64 / self.words_total as f64
    }

    /// `686 (74.7%)`
    pub fn correct_cell(&self) -> String {
        format!("{} ({:.1}%)", self.words_correct, 100.0 * self.accuracy())
    }

    pub fn check(&self) -> Result<()> {
        if self.words_correct > self.words_total || self.content_errors + self.function_errors != self.errors() {
            return Err(Error::Invariant(format!("inconsistent report {self:?}")));
        }
        Ok(())
    }
}

fn is_punctuation(word: &str) -> bool {
    !word.chars().any(char::is_alphanumeric)
}

/// Reference classes from the tagger, or per word from the lexicon when the
/// sentence cannot be tagged: a word counts as content if any of its classes
/// is content, and unknown words count as content.
fn reference_is_content(sentence: &[Token], lm: &ClassLM, content: &BTreeSet<ClassId>) -> Vec<bool> {
    match tag(sentence, lm) {
        Ok(classes) => classes.iter().map(|c| content.contains(c)).collect(),
        Err(_) => sentence
            .iter()
            .map(|w| {
                lm.lexicon
                    .classes_of(w.as_str())
                    .is_none_or(|cs| cs.iter().any(|c| content.contains(c)))
            })
            .collect(),
    }
}

pub fn word_accuracy(hyps: &[Vec<Token>], refs: &[Vec<Token>], content: &BTreeSet<ClassId>, lm: &ClassLM) -> Result<EvalReport> {
    if hyps.len() != refs.len() {
        return Err(Error::Precondition(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut report = EvalReport::default();
    for (k, (hyp, reference)) in hyps.iter().zip(refs).enumerate() {
        if hyp.len() != reference.len() {
            return Err(Error::Precondition(format!(
                "sentence {k}: hypothesis has {} tokens, reference {}",
                hyp.len(),
                reference.len()
            )));
        }
        let content_flags = reference_is_content(reference, lm, content);
        for ((h, r), is_content) in hyp.iter().zip(reference).zip(content_flags) {
            let correct = h == r;
            report.words_total += 1;
            if is_punctuation(r.as_str()) {
                report.punctuation_total += 1;
                report.punctuation_correct += usize::from(correct);
            }
            if correct {
                report.words_correct += 1;
            } else if is_content {
                report.content_errors += 1;
            } else {
                report.function_errors += 1;
            }
        }
    }
    report.check()?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Perplexity {
    pub value: f64,
    pub log_prob: f64,
    /// French tokens plus one end event per sentence.
    pub events: usize,
    /// Indices of sentences with zero probability.
    pub zero_prob_sentences: Vec<usize>,
}

/// `exp(-Σ log p / (tokens + sentences))`; only normalized (interpolated)
/// models are admitted.
pub fn perplexity(pairs: &[SentencePair], model: &TransModel, cfg: SmoothingConfig) -> Result<Perplexity> {
    if !matches!(cfg, SmoothingConfig::Interpolate { .. }) {
        return Err(Error::Precondition(format!(
            "perplexity needs a normalized model; {cfg} is not"
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Precondition("no sentences".into()));
    }
    let logps: Vec<f64> = pairs
        .par_iter()
        .map(|p| tm_sentence_logprob(p, model, cfg))
        .collect::<Result<_>>()?;
    let zero_prob_sentences: Vec<usize> = logps
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == f64::NEG_INFINITY)
        .map(|(i, _)| i)
        .collect();
    let log_prob: f64 = logps.iter().sum();
    let events = pairs.iter().map(|p| p.french.len() + 1).sum::<usize>();
    let value = if zero_prob_sentences.is_empty() {
        (-log_prob / events as f64).exp()
    } else {
        f64::INFINITY
    };
    Ok(Perplexity {
        value,
        log_prob,
        events,
        zero_prob_sentences,
    })
}

/// Plain-text comparison table followed by a `key=value` block per row.
pub fn format_report(rows: &[(&str, &EvalReport)]) -> String {
    let label_width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(5);
    let total = rows.first().map_or(0, |(_, r)| r.words_total);
    let correct_header = format!("Words Correct (/{total})");
    let correct_width = correct_header
        .len()
        .max(rows.iter().map(|(_, r)| r.correct_cell().len()).max().unwrap_or(0));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<label_width$}  {:<correct_width$}  {:>14}  {:>15}  {:>10}",
        "Model", correct_header, "Content errors", "Function errors", "Perplexity"
    );
    for (label, r) in rows {
        let ppl = r.perplexity.map_or("-".to_string(), |p| format!("{p:.1}"));
        let _ = writeln!(
            out,
            "{:<label_width$}  {:<correct_width$}  {:>14}  {:>15}  {:>10}",
            label,
            r.correct_cell(),
            r.content_errors,
            r.function_errors,
            ppl
        );
    }
    for (label, r) in rows {
        let key: String = label
            .chars()
            .map(|ch| if ch.is_alphanumeric() { ch.to_ascii_lowercase() } else { '_' })
            .collect();
        out.push('\n');
        let _ = writeln!(out, "{key}.words_total={}", r.words_total);
        let _ = writeln!(out, "{key}.words_correct={}", r.words_correct);
        let _ = writeln!(out, "{key}.accuracy={:.6}", r.accuracy());
        let _ = writeln!(out, "{key}.content_errors={}", r.content_errors);
        let _ = writeln!(out, "{key}.function_errors={}", r.function_errors);
        let _ = writeln!(out, "{key}.punctuation_total={}", r.punctuation_total);
        let _ = writeln!(out, "{key}.punctuation_correct={}", r.punctuation_correct);
        if let Some(p) = r.perplexity {
            let _ = writeln!(out, "{key}.perplexity={}", fmt_prob(p));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classlm::{ContextualParams, LexicalParams};
    use crate::corpus::tokens;

    fn lm() -> ClassLM {
        let mut lexicon = Lexicon::new(vec!["NOUN".into(), "DET".into(), "PUNCT".into()]).unwrap();
        lexicon.insert("le", [ClassId(1)]).unwrap();
        lexicon.insert("chat", [ClassId(0)]).unwrap();
        lexicon.insert("chien", [ClassId(0)]).unwrap();
        lexicon.insert(".", [ClassId(2)]).unwrap();
        let mut lexical = LexicalParams::default();
        lexical.insert("le", ClassId(1), 1.0);
        lexical.insert("chat", ClassId(0), 0.5);
        lexical.insert("chien", ClassId(0), 0.5);
        lexical.insert(".", ClassId(2), 1.0);
        ClassLM {
            contextual: ContextualParams::uniform(3),
            lexical,
            lexicon,
        }
    }

    fn sents(s: &[&str]) -> Vec<Vec<Token>> {
        s.iter().map(|x| tokens(x).unwrap()).collect()
    }

    #[test]
    fn identity_is_perfect() {
        let lm = lm();
        let refs = sents(&["le chat .", "le chien"]);
        let r = word_accuracy(&refs, &refs, &default_content_classes(&lm.lexicon), &lm).unwrap();
        assert_eq!((r.words_total, r.words_correct, r.errors()), (5, 5, 0));
        assert_eq!((r.punctuation_total, r.punctuation_correct), (1, 1));
    }

    #[test]
    fn noun_error_is_a_content_error() {
        let lm = lm();
        let content = default_content_classes(&lm.lexicon);
        let r = word_accuracy(&sents(&["le chien ."]), &sents(&["le chat ."]), &content, &lm).unwrap();
        assert_eq!((r.content_errors, r.function_errors), (1, 0));
        let r = word_accuracy(&sents(&["chat chat ."]), &sents(&["le chat ."]), &content, &lm).unwrap();
        assert_eq!((r.content_errors, r.function_errors), (0, 1));
        assert!(word_accuracy(&sents(&["le"]), &sents(&["le chat"]), &content, &lm).is_err());
    }

    #[test]
    fn reporting_format() {
        let r = EvalReport {
            words_total: 918,
            words_correct: 686,
            content_errors: 200,
            function_errors: 32,
            ..EvalReport::default()
        };
        assert_eq!(r.correct_cell(), "686 (74.7%)");
        let table = format_report(&[("Language model alone", &r)]);
        assert!(table.contains("Words Correct (/918)"));
        assert!(table.contains("language_model_alone.words_correct=686"));
    }

    #[test]
    fn perplexity_needs_interpolation() {
        let model = TransModel::lm_only(lm());
        let pairs = vec![SentencePair::from_text("le chat", "the cat").unwrap()];
        assert!(perplexity(&pairs, &model, SmoothingConfig::Maximum).is_err());
        // uniform context: (1/4)^3 transitions, lexical 1 * 0.5.
        let p = perplexity(&pairs, &model, SmoothingConfig::pure_lm()).unwrap();
        let want = (-(0.25f64.powi(3) * 0.5).ln() / 3.0).exp();
        assert!((p.value - want).abs() < 1e-9 * want);
        assert_eq!(p.events, 3);
    }

    #[test]
    fn zero_probability_sentences_are_listed() {
        let mut lm = lm();
        let mut table = vec![0.0; 64];
        for row in 0..16 {
            // Every transition goes to the end event.
            table[row * 4 + 3] = 1.0;
        }
        lm.contextual = ContextualParams::from_table(3, table).unwrap();
        let model = TransModel::lm_only(lm);
        let pairs = vec![SentencePair::from_text("le", "the").unwrap()];
        let p = perplexity(&pairs, &model, SmoothingConfig::pure_lm()).unwrap();
        assert!(p.value.is_infinite());
        assert_eq!(p.zero_prob_sentences, vec![0]);
    }
}
