use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use transdict::classlm::{load_class_lm, write_class_lm};
use transdict::corpus::{filter_pairs, load_bitext, load_lexicon, tokens, ClassId, Token};
use transdict::decoder::{format_decode_line, load_hypotheses, prune};
use transdict::eval::{default_content_classes, format_report, parse_content_classes};
use transdict::phonosim::{load_lattices, load_phonetic_dict, write_lattices, AcousticSimulator};
use transdict::synth::{synthesize, write_corpus, SynthConfig};
use transdict::transmodel::{load_trans_model, write_joint};
use transdict::{
    perplexity, tag, tag_pairs, to_bilexical, train_bilexical, train_class_lm,
    word_accuracy, ChannelConfig, ClassLM, LmTrainConfig, NBestLattice, SentencePair,
    SmoothingConfig, TmTrainConfig, TransModel,
};

#[derive(Parser)]
#[command(name = "transdict", version, about = "Translation-aided dictation: train, simulate, decode, evaluate")]
struct Cli {
    /// Worker threads for per-sentence work; 1 keeps runs bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the tri-class language model on the French side of a bitext.
    TrainLm(TrainLmArgs),
    /// Train bi-lexical translation parameters: filter, tag, EM, normalize.
    TrainTm(TrainTmArgs),
    /// Print the most likely class sequence for each French sentence.
    Tag(TagArgs),
    /// Produce n-best lattices for the French side of a bitext.
    Simulate(SimulateArgs),
    /// Decode lattices with the translation-conditioned model.
    Decode(DecodeArgs),
    /// Per-token perplexity of a bitext.
    Perplexity(PerplexityArgs),
    /// Score a decode output file against references.
    Eval(EvalArgs),
    /// Sample a synthetic corpus from a random ground-truth model.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainLmArgs {
    /// French<TAB>English sentence pairs.
    #[arg(long)]
    bitext: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Maximum EM iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Relative log-likelihood gain below which EM stops.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Add-lambda smoothing of the class-trigram rows.
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
}

#[derive(Args)]
struct TrainTmArgs {
    #[arg(long)]
    bitext: PathBuf,
    /// Class model file from train-lm.
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Parameters below this are dropped after each iteration.
    #[arg(long, default_value_t = 1e-9)]
    prune_floor: f64,
    /// Pairs with a longer side are left out of training.
    #[arg(long, default_value_t = transdict::corpus::DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    lm: PathBuf,
    /// One French sentence per line; anything after a tab is ignored.
    #[arg(long)]
    input: PathBuf,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// word<TAB>phones pronunciation dictionary.
    #[arg(long)]
    phonedict: Option<PathBuf>,
    /// Candidates kept per token.
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Acoustic log-score lost per phone edit.
    #[arg(long, default_value_t = 2.0)]
    distance_weight: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ChannelArgs {
    fn config(&self) -> ChannelConfig {
        ChannelConfig {
            distance_weight: self.distance_weight,
            noise_sd: self.noise_sd,
            n: self.n,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Reference bitext; its French side is "spoken".
    #[arg(long)]
    bitext: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    channel: ChannelArgs,
}

#[derive(Args)]
struct DecodeArgs {
    /// English sources, with the French side used as references.
    #[arg(long, required_unless_present = "simulate")]
    bitext: Option<PathBuf>,
    /// Lattice file from `simulate`.
    #[arg(long, conflicts_with = "simulate")]
    lattices: Option<PathBuf>,
    /// Simulate lattices for this bitext instead of reading them.
    #[arg(long, value_name = "BITEXT")]
    simulate: Option<PathBuf>,
    #[arg(long)]
    lm: PathBuf,
    /// Translation model from train-tm; without it only the class model is used.
    #[arg(long)]
    tm: Option<PathBuf>,
    /// interp:W, max or etest:T.
    #[arg(long, default_value = "interp:0.85")]
    smoothing: SmoothingConfig,
    /// Prune each candidate list to this many entries before searching.
    #[arg(long, default_value_t = 20)]
    prune: usize,
    #[arg(long, default_value_t = 1.0)]
    acoustic_weight: f64,
    /// Comma-separated content classes for the report.
    #[arg(long)]
    content_classes: Option<String>,
    /// Hypotheses file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    channel: ChannelArgs,
}

#[derive(Args)]
struct PerplexityArgs {
    #[arg(long)]
    bitext: PathBuf,
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    tm: Option<PathBuf>,
    /// Must be interp:W; W=0 gives the class model alone.
    #[arg(long, default_value = "interp:0.85")]
    smoothing: SmoothingConfig,
}

#[derive(Args)]
struct EvalArgs {
    /// Decode output (hypotheses in the first column).
    #[arg(long)]
    hyp: PathBuf,
    /// Reference bitext.
    #[arg(long)]
    bitext: PathBuf,
    /// Class model used to tag references.
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    content_classes: Option<String>,
    /// Row label in the report.
    #[arg(long, default_value = "Decoder")]
    label: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    french_vocab: usize,
    #[arg(long, default_value_t = 200)]
    english_vocab: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 0.9)]
    concentration: f64,
    #[arg(long, default_value_t = 5000)]
    train_pairs: usize,
    #[arg(long, default_value_t = 50)]
    test_pairs: usize,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 25)]
    max_len: usize,
    #[arg(long, default_value_t = 15)]
    test_min_len: usize,
    #[arg(long, default_value_t = 20)]
    test_max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!(transdict::Error::Precondition(format!("{} does not exist or is not a file", path.display())));
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn french_side(pairs: &[SentencePair]) -> Vec<Vec<Token>> {
    pairs.iter().map(|p| p.french.clone()).collect()
}

fn load_model(lm: &Path, tm: Option<&Path>) -> Result<TransModel> {
    let lm = load_class_lm(lm)?;
    Ok(match tm {
        Some(tm) => load_trans_model(tm, lm)?,
        None => TransModel::lm_only(lm),
    })
}

fn content_classes(spec: Option<&str>, lm: &ClassLM) -> Result<BTreeSet<ClassId>> {
    Ok(match spec {
        Some(s) => parse_content_classes(s, &lm.lexicon)?,
        None => default_content_classes(&lm.lexicon),
    })
}

fn simulate_lattices(pairs: &[SentencePair], channel: &ChannelArgs) -> Result<Vec<NBestLattice>> {
    let Some(dict_path) = &channel.phonedict else {
        bail!(transdict::Error::Precondition("simulation needs --phonedict".into()));
    };
    require_file(dict_path)?;
    let mut dict = load_phonetic_dict(dict_path)?;
    let refs = french_side(pairs);
    let added = dict.fill_missing(refs.iter().flatten().map(Token::as_str))?;
    if added > 0 {
        warn!("{added} words received rule-based pronunciations");
    }
    let sim = AcousticSimulator::new(dict)?;
    Ok(sim.simulate_corpus(&refs, &channel.config())?)
}

fn train_lm(a: &TrainLmArgs) -> Result<()> {
    require_file(&a.bitext)?;
    require_file(&a.lexicon)?;
    let pairs = load_bitext(&a.bitext)?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let cfg = LmTrainConfig {
        max_iters: a.iters,
        rel_tol: a.tol,
        smoothing_lambda: a.lambda,
    };
    let (lm, history) = train_class_lm(&french_side(&pairs), &lexicon, &cfg)?;
    info!(
        "{} EM iterations, final log-likelihood {:.6}",
        history.iterations(),
        history.final_log_likelihood()
    );
    write_class_lm(&a.out, &lm)?;
    Ok(())
}

fn train_tm(a: &TrainTmArgs) -> Result<()> {
    require_file(&a.bitext)?;
    require_file(&a.lm)?;
    let pairs = load_bitext(&a.bitext)?;
    let lm = load_class_lm(&a.lm)?;
    let (kept, stats) = filter_pairs(pairs, a.max_tokens);
    info!(
        "retained {} of {} pairs ({:.1}%), dropped {} longer than {} tokens",
        stats.retained,
        stats.retained + stats.dropped,
        100.0 * stats.retained_ratio(),
        stats.dropped,
        a.max_tokens
    );
    let (tagged, skipped) = tag_pairs(&kept, &lm);
    if skipped > 0 {
        warn!("{skipped} pairs could not be tagged and were left out");
    }
    let cfg = TmTrainConfig {
        max_iters: a.max_iters,
        rel_tol: a.tol,
        prune_floor: a.prune_floor,
    };
    let (joint, history) = train_bilexical(&tagged, &cfg)?;
    info!(
        "{} EM iterations, {} joint parameters, {} bi-lexical parameters",
        history.iterations(),
        joint.len(),
        to_bilexical(&joint).len()
    );
    write_joint(&a.out, &joint, &lm.lexicon)?;
    Ok(())
}

fn tag_cmd(a: &TagArgs) -> Result<()> {
    require_file(&a.lm)?;
    require_file(&a.input)?;
    let lm = load_class_lm(&a.lm)?;
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let french = line.split('\t').next().unwrap_or_default();
        let sentence = tokens(french).with_context(|| format!("{}:{}", a.input.display(), i + 1))?;
        let classes = tag(&sentence, &lm).with_context(|| format!("{}:{}", a.input.display(), i + 1))?;
        let labels: Vec<&str> = classes.iter().map(|&c| lm.lexicon.class_name(c)).collect();
        out.push_str(&format!("{french}\t{}\n", labels.join(" ")));
    }
    emit(a.out.as_deref(), &out)
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    require_file(&a.bitext)?;
    let pairs = load_bitext(&a.bitext)?;
    let lattices = simulate_lattices(&pairs, &a.channel)?;
    let found = lattices.iter().flat_map(|l| &l.truth).filter(|t| t.is_some()).count();
    let total: usize = lattices.iter().map(NBestLattice::len).sum();
    info!("spoken word in its candidate list at {found} of {total} positions");
    write_lattices(&a.out, &lattices)?;
    Ok(())
}

fn decode_cmd(a: &DecodeArgs) -> Result<()> {
    let bitext = a.simulate.as_ref().or(a.bitext.as_ref()).expect("clap requires one");
    require_file(bitext)?;
    require_file(&a.lm)?;
    if let Some(tm) = &a.tm {
        require_file(tm)?;
    }
    let pairs = load_bitext(bitext)?;
    let model = load_model(&a.lm, a.tm.as_deref())?;
    let lattices = match (&a.lattices, &a.simulate) {
        (Some(path), _) => {
            require_file(path)?;
            load_lattices(path)?
        }
        (None, Some(_)) => simulate_lattices(&pairs, &a.channel)?,
        (None, None) => bail!(transdict::Error::Precondition("give --lattices or --simulate".into())),
    };
    if lattices.len() != pairs.len() {
        bail!(transdict::Error::Precondition(format!(
            "{} lattices for {} sentence pairs",
            lattices.len(),
            pairs.len()
        )));
    }
    let pruned: Vec<NBestLattice> = lattices.iter().map(|l| prune(l, a.prune)).collect::<transdict::Result<_>>()?;
    let english: Vec<Vec<Token>> = pairs.iter().map(|p| p.english.clone()).collect();
    let results = transdict::decoder::decode_corpus(&pruned, &english, &model, a.smoothing, a.acoustic_weight);
    let mut out = String::new();
    let mut hyps = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        let r = r.with_context(|| format!("sentence {}", k + 1))?;
        out.push_str(&format_decode_line(&r, &model.lm.lexicon));
        out.push('\n');
        hyps.push(r.words);
    }
    emit(a.out.as_deref(), &out)?;

    let refs = french_side(&pairs);
    if hyps.iter().zip(&refs).all(|(h, r)| h.len() == r.len()) {
        let content = content_classes(a.content_classes.as_deref(), &model.lm)?;
        let mut report = word_accuracy(&hyps, &refs, &content, &model.lm)?;
        if matches!(a.smoothing, SmoothingConfig::Interpolate { .. }) {
            report.perplexity = Some(perplexity(&pairs, &model, a.smoothing)?.value);
        }
        let label = format!("{} ({})", if a.tm.is_some() { "Translation model" } else { "Class model alone" }, a.smoothing);
        eprint!("{}", format_report(&[(&label, &report)]));
    }
    Ok(())
}

fn perplexity_cmd(a: &PerplexityArgs) -> Result<()> {
    require_file(&a.bitext)?;
    require_file(&a.lm)?;
    let pairs = load_bitext(&a.bitext)?;
    let model = load_model(&a.lm, a.tm.as_deref())?;
    let p = perplexity(&pairs, &model, a.smoothing)?;
    if !p.zero_prob_sentences.is_empty() {
        let lines: Vec<String> = p.zero_prob_sentences.iter().map(|i| (i + 1).to_string()).collect();
        warn!("zero-probability sentences at lines {}", lines.join(", "));
    }
    println!("perplexity={}", transdict::logspace::fmt_prob(p.value));
    println!("log_prob={}", transdict::logspace::fmt_prob(p.log_prob));
    println!("events={}", p.events);
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    require_file(&a.hyp)?;
    require_file(&a.bitext)?;
    require_file(&a.lm)?;
    let hyps = load_hypotheses(&a.hyp)?;
    let refs = french_side(&load_bitext(&a.bitext)?);
    let lm = load_class_lm(&a.lm)?;
    let content = content_classes(a.content_classes.as_deref(), &lm)?;
    let report = word_accuracy(&hyps, &refs, &content, &lm)?;
    print!("{}", format_report(&[(&a.label, &report)]));
    Ok(())
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        french_vocab: a.french_vocab,
        english_vocab: a.english_vocab,
        num_classes: a.classes,
        concentration: a.concentration,
        train_pairs: a.train_pairs,
        test_pairs: a.test_pairs,
        train_len: (a.min_len, a.max_len),
        test_len: (a.test_min_len, a.test_max_len),
        seed: a.seed,
        ..SynthConfig::default()
    };
    let corpus = synthesize(&cfg)?;
    write_corpus(&a.out_dir, &corpus)?;
    info!(
        "wrote {} training and {} test pairs to {}",
        corpus.train.len(),
        corpus.test.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::TrainLm(a) => train_lm(a),
        Command::TrainTm(a) => train_tm(a),
        Command::Tag(a) => tag_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Perplexity(a) => perplexity_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

/// 1 for broken internal invariants, 2 for everything the user can fix.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<transdict::Error>()) {
        Some(e) if !e.is_user_error() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info })
        .parse_default_env()
        .format_timestamp(None)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global() {
        warn!("thread pool: {e}");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
