//! Tokenized bilingual corpora and the word-class lexicon.
//!
//! Bitext files carry one sentence pair per line, `french<TAB>english`, with
//! tokens separated by single spaces. Lexicon files open with a
//! `#CLASSES<TAB>NAME,NAME,...` header followed by `word<TAB>CLASS[,CLASS...]`
//! lines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// The class inventory used when none is supplied.
pub const DEFAULT_CLASSES: [&str; 15] = [
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "PREP", "CONJ", "NUM", "AUX", "PROPER", "INTERJ",
    "PART", "PUNCT", "OTHER",
];

/// Length bound used by [`filter_pairs`] when none is given.
pub const DEFAULT_MAX_TOKENS: usize = 40;

/// A non-empty, whitespace-free word.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(String);

impl Token {
    pub fn new(surface: impl Into<String>) -> Result<Self> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(Error::Precondition("empty token".into()));
        }
        if surface.chars().any(char::is_whitespace) {
            return Err(Error::Precondition(format!(
                "token {surface:?} contains whitespace"
            )));
        }
        Ok(Token(surface))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for Token {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Parses a space-separated token sequence. Empty input or doubled spaces are errors.
pub fn tokens(text: &str) -> Result<Vec<Token>> {
    if text.is_empty() {
        return Err(Error::Precondition("empty token sequence".into()));
    }
    text.split(' ').map(Token::new).collect()
}

/// Index of one of the `C` word classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u16);

impl ClassId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub french: Vec<Token>,
    pub english: Vec<Token>,
}

impl SentencePair {
    pub fn new(french: Vec<Token>, english: Vec<Token>) -> Result<Self> {
        if french.is_empty() || english.is_empty() {
            return Err(Error::Precondition("sentence pair with an empty side".into()));
        }
        Ok(SentencePair { french, english })
    }

    /// Builds a pair from two space-separated strings.
    pub fn from_text(french: &str, english: &str) -> Result<Self> {
        SentencePair::new(tokens(french)?, tokens(english)?)
    }
}

impl fmt::Display for SentencePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_joined(f, &self.french)?;
        f.write_str("\t")?;
        write_joined(f, &self.english)
    }
}

fn write_joined(f: &mut fmt::Formatter<'_>, toks: &[Token]) -> fmt::Result {
    for (i, t) in toks.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        f.write_str(t.as_str())?;
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Splits raw bytes into LF-terminated UTF-8 lines, naming the first bad line.
pub(crate) fn utf8_lines<'a>(origin: &str, bytes: &'a [u8]) -> Result<Vec<&'a str>> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, raw)| {
            std::str::from_utf8(raw).map_err(|_| Error::parse(origin, i + 1, "invalid UTF-8"))
        })
        .collect()
}

pub fn load_bitext(path: impl AsRef<Path>) -> Result<Vec<SentencePair>> {
    let path = path.as_ref();
    parse_bitext(&path.display().to_string(), &read_file(path)?)
}

pub fn parse_bitext(origin: &str, bytes: &[u8]) -> Result<Vec<SentencePair>> {
    utf8_lines(origin, bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let lineno = i + 1;
            let (fr, en) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "missing tab separator"))?;
            if fr.is_empty() {
                return Err(Error::parse(origin, lineno, "empty French side"));
            }
            if en.is_empty() {
                return Err(Error::parse(origin, lineno, "empty English side"));
            }
            let french = tokens(fr).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
            let english = tokens(en).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
            Ok(SentencePair { french, english })
        })
        .collect()
}

pub fn format_bitext(pairs: &[SentencePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    out
}

pub fn write_bitext(path: impl AsRef<Path>, pairs: &[SentencePair]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_bitext(pairs)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub retained: usize,
    pub dropped: usize,
}

impl FilterStats {
    pub fn retained_ratio(&self) -> f64 {
        let total = self.retained + self.dropped;
        if total == 0 {
            1.0
        } else {
            self.retained as f64 / total as f64
        }
    }
}

/// Keeps the pairs whose sides both have at most `max_tokens` tokens.
pub fn filter_pairs(pairs: Vec<SentencePair>, max_tokens: usize) -> (Vec<SentencePair>, FilterStats) {
    let before = pairs.len();
    let kept: Vec<_> = pairs
        .into_iter()
        .filter(|p| p.french.len() <= max_tokens && p.english.len() <= max_tokens)
        .collect();
    let stats = FilterStats {
        retained: kept.len(),
        dropped: before - kept.len(),
    };
    (kept, stats)
}

/// Word → admissible classes, plus the ordered class inventory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    class_names: Vec<String>,
    entries: BTreeMap<String, Vec<ClassId>>,
}

impl Lexicon {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::Precondition(format!(
                "a lexicon needs at least 2 classes, got {}",
                class_names.len()
            )));
        }
        if class_names.len() > u16::MAX as usize {
            return Err(Error::Precondition("too many classes".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &class_names {
            if name.is_empty() || name.contains([',', '\t', ' ']) {
                return Err(Error::Precondition(format!("bad class label {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Precondition(format!("duplicate class label {name}")));
            }
        }
        Ok(Lexicon {
            class_names,
            entries: BTreeMap::new(),
        })
    }

    pub fn with_default_classes() -> Self {
        Lexicon::new(DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect())
            .expect("default inventory is valid")
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        &self.class_names[c.index()]
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_names
            .iter()
            .position(|n| n == name)
            .map(|i| ClassId(i as u16))
    }

    pub fn all_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..self.class_names.len()).map(|i| ClassId(i as u16))
    }

    /// Adds classes for `word`, merging with any existing entry.
    pub fn insert(&mut self, word: &str, classes: impl IntoIterator<Item = ClassId>) -> Result<()> {
        let c = self.num_classes();
        let entry = self.entries.entry(word.to_string()).or_default();
        for id in classes {
            if id.index() >= c {
                return Err(Error::Precondition(format!(
                    "class index {} out of range for {c} classes",
                    id.0
                )));
            }
            if let Err(pos) = entry.binary_search(&id) {
                entry.insert(pos, id);
            }
        }
        if entry.is_empty() {
            self.entries.remove(word);
            return Err(Error::Precondition(format!("empty class set for {word}")));
        }
        Ok(())
    }

    pub fn classes_of(&self, word: &str) -> Option<&[ClassId]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in word order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ClassId])> {
        self.entries.iter().map(|(w, c)| (w.as_str(), c.as_slice()))
    }

    pub fn format_classes(&self, classes: &[ClassId]) -> String {
        classes
            .iter()
            .map(|&c| self.class_name(c))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses a comma-separated class list against this inventory.
    pub fn parse_classes(&self, list: &str) -> std::result::Result<Vec<ClassId>, String> {
        if list.is_empty() {
            return Err("empty class list".into());
        }
        list.split(',')
            .map(|name| {
                self.class_id(name)
                    .ok_or_else(|| format!("unknown class label {name:?}"))
            })
            .collect()
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    parse_lexicon(&path.display().to_string(), &read_file(path)?)
}

pub fn parse_lexicon(origin: &str, bytes: &[u8]) -> Result<Lexicon> {
    let lines = utf8_lines(origin, bytes)?;
    let header = lines
        .first()
        .ok_or_else(|| Error::parse(origin, 1, "missing #CLASSES header"))?;
    let names = header
        .strip_prefix("#CLASSES\t")
        .ok_or_else(|| Error::parse(origin, 1, "first line must be `#CLASSES<TAB>NAME,...`"))?;
    let names: Vec<String> = names.split(',').map(str::to_string).collect();
    let mut lex = Lexicon::new(names).map_err(|e| Error::parse(origin, 1, e.to_string()))?;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let lineno = i + 1;
        let (word, classes) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "missing tab separator"))?;
        Token::new(word).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        let ids = lex
            .parse_classes(classes)
            .map_err(|m| Error::parse(origin, lineno, m))?;
        lex.insert(word, ids)
            .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
    }
    Ok(lex)
}

pub fn format_lexicon(lex: &Lexicon) -> String {
    let mut out = format!("#CLASSES\t{}\n", lex.class_names.join(","));
    for (word, classes) in lex.iter() {
        out.push_str(word);
        out.push('\t');
        out.push_str(&lex.format_classes(classes));
        out.push('\n');
    }
    out
}

pub fn write_lexicon(path: impl AsRef<Path>, lex: &Lexicon) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_lexicon(lex).as_bytes())
        .map_err(|e| Error::io(path, e))
}
