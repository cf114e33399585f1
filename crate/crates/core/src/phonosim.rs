//! Phonetic lexicon graph and a simulated acoustic front end.
//!
//! The graph is a prefix tree over phone symbols in which every complete path
//! spells a distinct phone sequence and carries the set of words (homophones)
//! pronounced that way. The simulator scores every path against the spoken
//! word's pronunciation with a unit-cost edit distance plus seeded Gaussian
//! noise, then expands paths to words and keeps the best `n`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::corpus::{read_file, utf8_lines, Token};
use crate::error::{Error, Result};
use crate::logspace::fmt_prob;

/// A non-empty sequence of phone symbols.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhoneString(Vec<String>);

impl PhoneString {
    pub fn new(phones: Vec<String>) -> Result<Self> {
        if phones.is_empty() {
            return Err(Error::Precondition("empty pronunciation".into()));
        }
        if let Some(p) = phones.iter().find(|p| p.is_empty() || p.contains(char::is_whitespace)) {
            return Err(Error::Precondition(format!("bad phone symbol {p:?}")));
        }
        Ok(PhoneString(phones))
    }

    /// Parses space-separated phone symbols.
    pub fn parse(text: &str) -> Result<Self> {
        PhoneString::new(text.split(' ').map(str::to_string).collect())
    }

    pub fn phones(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PhoneString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Word → pronunciations over a phone inventory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhoneticDict {
    pronunciations: BTreeMap<String, BTreeSet<PhoneString>>,
    inventory: Option<BTreeSet<String>>,
}

impl PhoneticDict {
    pub fn new() -> Self {
        Self::default()
    }

    /// A dictionary that rejects phones outside `inventory`.
    pub fn with_inventory(inventory: impl IntoIterator<Item = String>) -> Self {
        PhoneticDict {
            pronunciations: BTreeMap::new(),
            inventory: Some(inventory.into_iter().collect()),
        }
    }

    pub fn insert(&mut self, word: &str, pron: PhoneString) -> Result<()> {
        if let Some(inv) = &self.inventory {
            if let Some(p) = pron.phones().iter().find(|p| !inv.contains(*p)) {
                return Err(Error::Precondition(format!("phone {p:?} of {word:?} not in inventory")));
            }
        }
        self.pronunciations.entry(word.to_string()).or_default().insert(pron);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&BTreeSet<PhoneString>> {
        self.pronunciations.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.pronunciations.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.pronunciations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pronunciations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<PhoneString>)> {
        self.pronunciations.iter().map(|(w, p)| (w.as_str(), p))
    }

    /// Phones in use, or the declared inventory.
    pub fn inventory(&self) -> BTreeSet<String> {
        match &self.inventory {
            Some(inv) => inv.clone(),
            None => self
                .pronunciations
                .values()
                .flatten()
                .flat_map(|p| p.phones().iter().cloned())
                .collect(),
        }
    }

    /// Distinct pronunciations across all words.
    pub fn distinct_pronunciations(&self) -> BTreeSet<&PhoneString> {
        self.pronunciations.values().flatten().collect()
    }

    /// Gives every word in `words` that lacks an entry a rule-based pronunciation.
    pub fn fill_missing<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) -> Result<usize> {
        let mut added = 0;
        for w in words {
            if !self.contains(w) {
                let pron = fallback_pronunciation(w);
                warn!("no pronunciation for {w:?}; using rule-based /{pron}/");
                self.insert(w, pron)?;
                added += 1;
            }
        }
        Ok(added)
    }
}

const MULTI_LETTER: &[(&str, &[&str])] = &[
    ("eau", &["o"]),
    ("ain", &["ɛ̃"]),
    ("ein", &["ɛ̃"]),
    ("oin", &["w", "ɛ̃"]),
    ("ch", &["ʃ"]),
    ("gn", &["ɲ"]),
    ("qu", &["k"]),
    ("ph", &["f"]),
    ("ou", &["u"]),
    ("au", &["o"]),
    ("ai", &["ɛ"]),
    ("ei", &["ɛ"]),
    ("oi", &["w", "a"]),
    ("eu", &["ø"]),
    ("an", &["ɑ̃"]),
    ("am", &["ɑ̃"]),
    ("en", &["ɑ̃"]),
    ("em", &["ɑ̃"]),
    ("on", &["ɔ̃"]),
    ("om", &["ɔ̃"]),
    ("in", &["ɛ̃"]),
    ("im", &["ɛ̃"]),
    ("un", &["œ̃"]),
];

/// Letter-to-phone rules with a small digraph table; a coarse stand-in for
/// real grapheme-to-phoneme conversion. Words without letters map to `sil`.
pub fn fallback_pronunciation(word: &str) -> PhoneString {
    let mut lower: Vec<char> = word.to_lowercase().chars().collect();
    // Final consonants and a final schwa are usually silent.
    if lower.len() > 2 && matches!(lower.last(), Some('s' | 't' | 'x' | 'd' | 'z')) {
        lower.pop();
    }
    if lower.len() > 2 && lower.last() == Some(&'e') {
        lower.pop();
    }
    let mut phones: Vec<String> = Vec::new();
    let mut i = 0;
    'outer: while i < lower.len() {
        for (graph, out) in MULTI_LETTER {
            let g: Vec<char> = graph.chars().collect();
            if lower[i..].starts_with(&g) {
                phones.extend(out.iter().map(|s| s.to_string()));
                i += g.len();
                continue 'outer;
            }
        }
        let single: &[&str] = match lower[i] {
            'a' | 'à' | 'â' => &["a"],
            'é' => &["e"],
            'è' | 'ê' | 'ë' => &["ɛ"],
            'e' => &["ə"],
            'i' | 'î' | 'ï' | 'y' => &["i"],
            'o' | 'ô' => &["o"],
            'u' | 'ù' | 'û' | 'ü' => &["y"],
            'c' | 'k' | 'q' => &["k"],
            'ç' | 's' => &["s"],
            'j' => &["ʒ"],
            'g' => &["g"],
            'x' => &["k", "s"],
            'h' => &[],
            'b' => &["b"],
            'd' => &["d"],
            'f' => &["f"],
            'l' => &["l"],
            'm' => &["m"],
            'n' => &["n"],
            'p' => &["p"],
            'r' => &["ʁ"],
            't' => &["t"],
            'v' => &["v"],
            'w' => &["w"],
            'z' => &["z"],
            _ => &[],
        };
        phones.extend(single.iter().map(|s| s.to_string()));
        i += 1;
    }
    if phones.is_empty() {
        phones.push("sil".into());
    }
    PhoneString(phones)
}

pub fn load_phonetic_dict(path: impl AsRef<Path>) -> Result<PhoneticDict> {
    let path = path.as_ref();
    parse_phonetic_dict(&path.display().to_string(), &read_file(path)?)
}

/// `word<TAB>phone phone ...`, one pronunciation per line; words may repeat.
pub fn parse_phonetic_dict(origin: &str, bytes: &[u8]) -> Result<PhoneticDict> {
    let mut dict = PhoneticDict::new();
    for (i, line) in utf8_lines(origin, bytes)?.into_iter().enumerate() {
        let lineno = i + 1;
        let (word, phones) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "missing tab separator"))?;
        Token::new(word).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        let pron = PhoneString::parse(phones).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        dict.insert(word, pron)
            .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
    }
    Ok(dict)
}

pub fn format_phonetic_dict(dict: &PhoneticDict) -> String {
    let mut out = String::new();
    for (word, prons) in dict.iter() {
        for p in prons {
            let _ = writeln!(out, "{word}\t{p}");
        }
    }
    out
}

pub fn write_phonetic_dict(path: impl AsRef<Path>, dict: &PhoneticDict) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_phonetic_dict(dict)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
struct Node {
    children: BTreeMap<u32, u32>,
    /// Index into `PhoneticGraph::paths` when a pronunciation ends here.
    path: Option<u32>,
}

/// One complete root-to-final path.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPath {
    pub phones: PhoneString,
    /// Homophones sharing this phone sequence, sorted.
    pub words: Vec<String>,
}

/// Compressed phonetic lexicon: a phone trie with homophone sets on final nodes.
#[derive(Clone, Debug)]
pub struct PhoneticGraph {
    nodes: Vec<Node>,
    phones: Vec<String>,
    paths: Vec<GraphPath>,
}

impl PhoneticGraph {
    pub fn build(dict: &PhoneticDict) -> Result<Self> {
        if dict.is_empty() {
            return Err(Error::Precondition("empty phonetic dictionary".into()));
        }
        let phones: Vec<String> = dict.inventory().into_iter().collect();
        let phone_id: BTreeMap<&str, u32> = phones
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i as u32))
            .collect();
        let mut by_pron: BTreeMap<&PhoneString, Vec<String>> = BTreeMap::new();
        for (word, prons) in dict.iter() {
            for p in prons {
                by_pron.entry(p).or_default().push(word.to_string());
            }
        }
        let mut graph = PhoneticGraph {
            nodes: vec![Node::default()],
            phones: phones.clone(),
            paths: Vec::with_capacity(by_pron.len()),
        };
        for (pron, words) in by_pron {
            let mut node = 0u32;
            for p in pron.phones() {
                let id = phone_id[p.as_str()];
                let next = graph.nodes.len() as u32;
                node = *graph.nodes[node as usize].children.entry(id).or_insert(next);
                if node == next {
                    graph.nodes.push(Node::default());
                }
            }
            graph.nodes[node as usize].path = Some(graph.paths.len() as u32);
            graph.paths.push(GraphPath {
                phones: pron.clone(),
                words,
            });
        }
        Ok(graph)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn path(&self, id: usize) -> &GraphPath {
        &self.paths[id]
    }

    /// Walks the graph from the root and returns every complete path reached.
    pub fn enumerate_paths(&self) -> Vec<GraphPath> {
        let mut out = Vec::new();
        let mut stack: Vec<(u32, Vec<String>)> = vec![(0, Vec::new())];
        while let Some((node, prefix)) = stack.pop() {
            let n = &self.nodes[node as usize];
            if let Some(p) = n.path {
                out.push(GraphPath {
                    phones: PhoneString(prefix.clone()),
                    words: self.paths[p as usize].words.clone(),
                });
            }
            for (&ph, &child) in n.children.iter().rev() {
                let mut next = prefix.clone();
                next.push(self.phones[ph as usize].clone());
                stack.push((child, next));
            }
        }
        out
    }

    /// Homophones pronounced exactly `pron`.
    pub fn lookup(&self, pron: &PhoneString) -> Option<&[String]> {
        let mut node = 0u32;
        for p in pron.phones() {
            let id = self.phones.binary_search(p).ok()? as u32;
            node = *self.nodes[node as usize].children.get(&id)?;
        }
        self.nodes[node as usize]
            .path
            .map(|p| self.paths[p as usize].words.as_slice())
    }

    /// Unit-cost edit distance from `target` to every path, by a depth-first
    /// walk that shares one dynamic-programming row per trie node.
    pub fn distances(&self, target: &PhoneString) -> Vec<usize> {
        let target: Vec<Option<u32>> = target
            .phones()
            .iter()
            .map(|p| self.phones.binary_search(p).ok().map(|i| i as u32))
            .collect();
        let mut out = vec![usize::MAX; self.paths.len()];
        let first: Vec<usize> = (0..=target.len()).collect();
        let mut stack: Vec<(u32, Vec<usize>)> = vec![(0, first)];
        while let Some((node, row)) = stack.pop() {
            let n = &self.nodes[node as usize];
            if let Some(p) = n.path {
                out[p as usize] = row[target.len()];
            }
            for (&ph, &child) in &n.children {
                let mut next = Vec::with_capacity(row.len());
                next.push(row[0] + 1);
                for j in 1..=target.len() {
                    let sub = row[j - 1] + usize::from(target[j - 1] != Some(ph));
                    next.push(sub.min(row[j] + 1).min(next[j - 1] + 1));
                }
                stack.push((child, next));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    /// Acoustic log-score lost per phone edit.
    pub distance_weight: f64,
    pub noise_sd: f64,
    /// Candidates kept per token.
    pub n: usize,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            distance_weight: 2.0,
            noise_sd: 1.0,
            n: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub word: String,
    /// Acoustic log-score; higher is better.
    pub score: f64,
}

/// Ranked candidates per token plus, when known, the rank of the spoken word.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NBestLattice {
    pub positions: Vec<Vec<Candidate>>,
    pub truth: Vec<Option<usize>>,
}

impl NBestLattice {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// The top-ranked word at each position.
    pub fn acoustic_best(&self) -> Vec<&str> {
        self.positions
            .iter()
            .map(|c| c.first().map_or("", |c| c.word.as_str()))
            .collect()
    }
}

/// splitmix64 finalizer over `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Descending score, then ascending word.
pub(crate) fn rank_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.word.cmp(&b.word))
}

/// The confusion-channel acoustic simulator over a fixed vocabulary.
pub struct AcousticSimulator {
    dict: PhoneticDict,
    graph: PhoneticGraph,
}

impl AcousticSimulator {
    pub fn new(dict: PhoneticDict) -> Result<Self> {
        let graph = PhoneticGraph::build(&dict)?;
        Ok(AcousticSimulator { dict, graph })
    }

    pub fn graph(&self) -> &PhoneticGraph {
        &self.graph
    }

    pub fn dict(&self) -> &PhoneticDict {
        &self.dict
    }

    /// Scores every vocabulary word as a rendering of `truth` and returns the
    /// top `channel.n`, using `seed` for the noise draws.
    pub fn simulate_token(&self, truth: &str, channel: &ChannelConfig, seed: u64) -> Result<Vec<Candidate>> {
        if channel.n == 0 {
            return Err(Error::Precondition("n must be at least 1".into()));
        }
        let prons = self
            .dict
            .get(truth)
            .ok_or_else(|| Error::Precondition(format!("{truth:?} is not in the phonetic dictionary")))?;
        let mut dist = vec![usize::MAX; self.graph.num_paths()];
        for pron in prons {
            for (d, new) in dist.iter_mut().zip(self.graph.distances(pron)) {
                *d = (*d).min(new);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, channel.noise_sd)
            .map_err(|e| Error::Precondition(format!("noise_sd: {e}")))?;
        // Homophones share their path's score; a word with several
        // pronunciations takes its best path.
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for (id, d) in dist.into_iter().enumerate() {
            let eps = if channel.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let score = -channel.distance_weight * d as f64 + eps;
            for w in &self.graph.path(id).words {
                let e = best.entry(w.as_str()).or_insert(f64::NEG_INFINITY);
                *e = e.max(score);
            }
        }
        let mut list: Vec<Candidate> = best
            .into_iter()
            .map(|(word, score)| Candidate {
                word: word.to_string(),
                score,
            })
            .collect();
        list.sort_by(rank_order);
        list.truncate(channel.n);
        Ok(list)
    }

    /// One candidate list per token, each with its own sub-seed of `channel.seed`.
    pub fn simulate_sentence(&self, sentence: &[Token], channel: &ChannelConfig) -> Result<NBestLattice> {
        let mut lattice = NBestLattice::default();
        for (i, tok) in sentence.iter().enumerate() {
            let list = self.simulate_token(tok.as_str(), channel, derive_seed(channel.seed, i as u64))?;
            lattice.truth.push(list.iter().position(|c| c.word == tok.as_str()));
            lattice.positions.push(list);
        }
        Ok(lattice)
    }

    /// Sentence `k` uses sub-seed `derive_seed(channel.seed, k)`.
    pub fn simulate_corpus(&self, sentences: &[Vec<Token>], channel: &ChannelConfig) -> Result<Vec<NBestLattice>> {
        sentences
            .par_iter()
            .enumerate()
            .map(|(k, s)| {
                let ch = ChannelConfig {
                    seed: derive_seed(channel.seed, k as u64),
                    ..*channel
                };
                self.simulate_sentence(s, &ch)
            })
            .collect()
    }
}

/// Builds a simulator for `dict` and simulates one token.
pub fn simulate_token(truth: &str, dict: &PhoneticDict, channel: &ChannelConfig) -> Result<Vec<Candidate>> {
    AcousticSimulator::new(dict.clone())?.simulate_token(truth, channel, channel.seed)
}

pub fn simulate_sentence(sentence: &[Token], dict: &PhoneticDict, channel: &ChannelConfig) -> Result<NBestLattice> {
    AcousticSimulator::new(dict.clone())?.simulate_sentence(sentence, channel)
}

/// `SENT <k> <len> truth=<rank,...>` then `pos rank word score` per candidate.
pub fn format_lattices(lattices: &[NBestLattice]) -> String {
    let mut out = String::new();
    for (k, lat) in lattices.iter().enumerate() {
        let truth: Vec<String> = lat
            .truth
            .iter()
            .map(|t| t.map_or("-".to_string(), |r| r.to_string()))
            .collect();
        let _ = writeln!(out, "SENT {k} {} truth={}", lat.len(), truth.join(","));
        for (pos, list) in lat.positions.iter().enumerate() {
            for (rank, c) in list.iter().enumerate() {
                let _ = writeln!(out, "{pos} {rank} {} {}", c.word, fmt_prob(c.score));
            }
        }
    }
    out
}

pub fn write_lattices(path: impl AsRef<Path>, lattices: &[NBestLattice]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_lattices(lattices)).map_err(|e| Error::io(path, e))
}

pub fn load_lattices(path: impl AsRef<Path>) -> Result<Vec<NBestLattice>> {
    let path = path.as_ref();
    parse_lattices(&path.display().to_string(), &read_file(path)?)
}

pub fn parse_lattices(origin: &str, bytes: &[u8]) -> Result<Vec<NBestLattice>> {
    let mut out: Vec<NBestLattice> = Vec::new();
    for (i, line) in utf8_lines(origin, bytes)?.into_iter().enumerate() {
        let lineno = i + 1;
        let err = |m: String| Error::parse(origin, lineno, m);
        let fields: Vec<&str> = line.split(' ').collect();
        if let ["SENT", k, len, truth] = fields.as_slice() {
            if k.parse::<usize>().ok() != Some(out.len()) {
                return Err(err(format!("expected sentence {}", out.len())));
            }
            let len: usize = len.parse().map_err(|_| err("bad length".into()))?;
            let truth = truth
                .strip_prefix("truth=")
                .ok_or_else(|| err("expected truth=".into()))?;
            let truth: Vec<Option<usize>> = if len == 0 {
                Vec::new()
            } else {
                truth
                    .split(',')
                    .map(|t| match t {
                        "-" => Ok(None),
                        r => r.parse().map(Some).map_err(|_| err(format!("bad truth rank {r:?}"))),
                    })
                    .collect::<Result<_>>()?
            };
            if truth.len() != len {
                return Err(err("truth list length differs from sentence length".into()));
            }
            out.push(NBestLattice {
                positions: vec![Vec::new(); len],
                truth,
            });
            continue;
        }
        let [pos, rank, word, score] = fields.as_slice() else {
            return Err(err(format!("unrecognized record {line:?}")));
        };
        let lat = out.last_mut().ok_or_else(|| err("record before SENT header".into()))?;
        let pos: usize = pos.parse().map_err(|_| err("bad position".into()))?;
        let rank: usize = rank.parse().map_err(|_| err("bad rank".into()))?;
        let list = lat
            .positions
            .get_mut(pos)
            .ok_or_else(|| err(format!("position {pos} out of range")))?;
        if rank != list.len() {
            return Err(err(format!("expected rank {}", list.len())));
        }
        Token::new(*word).map_err(|e| err(e.to_string()))?;
        let score: f64 = score.parse().map_err(|_| err(format!("bad score {score:?}")))?;
        list.push(Candidate {
            word: word.to_string(),
            score,
        });
    }
    Ok(out)
}
