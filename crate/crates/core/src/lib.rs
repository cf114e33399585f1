//! Translation-aided dictation.
//!
//! A French sentence dictated from an English source is decoded with a
//! tri-class language model whose lexical probabilities are conditioned on the
//! English sentence through bi-lexical translation parameters `p(f|c,e)`.

pub mod classlm;
pub mod corpus;
pub mod decoder;
pub mod em;
pub mod error;
pub mod eval;
pub mod logspace;
pub mod phonosim;
pub mod synth;
pub mod transmodel;
mod trellis;

pub use classlm::{lm_sentence_logprob, tag, train_class_lm, ClassLM, LmTrainConfig};
pub use corpus::{ClassId, Lexicon, SentencePair, Token};
pub use decoder::{brute_force_decode, decode, prune, DecodeResult};
pub use em::EmHistory;
pub use error::{Error, Result};
pub use eval::{perplexity, word_accuracy, EvalReport};
pub use phonosim::{
    AcousticSimulator, Candidate, ChannelConfig, NBestLattice, PhoneString, PhoneticDict,
    PhoneticGraph,
};
pub use transmodel::{
    sentence_lexical, smoothed_score, tag_pairs, tm_sentence_logprob, to_bilexical, train_bilexical,
    BiLexicalParams, JointParams, SmoothingConfig, TaggedPair, TmTrainConfig, TransModel,
};
