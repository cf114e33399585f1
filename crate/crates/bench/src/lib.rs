//! Fixtures shared by the benchmarks.

use transdict::corpus::filter_pairs;
use transdict::synth::{synthesize, SynthConfig, SynthCorpus};
use transdict::{
    tag_pairs, to_bilexical, train_bilexical, train_class_lm, AcousticSimulator, ChannelConfig, LmTrainConfig,
    NBestLattice, TmTrainConfig, Token, TransModel,
};

pub struct Fixture {
    pub corpus: SynthCorpus,
    pub model: TransModel,
    pub lattices: Vec<NBestLattice>,
    pub english: Vec<Vec<Token>>,
}

pub fn corpus(train_pairs: usize) -> SynthCorpus {
    let cfg = SynthConfig {
        train_pairs,
        ..SynthConfig::default()
    };
    synthesize(&cfg).expect("synthesis")
}

pub fn french(corpus: &SynthCorpus) -> Vec<Vec<Token>> {
    corpus.train.iter().map(|p| p.french.clone()).collect()
}

/// Trained models plus 200-best lattices for the test set.
pub fn fixture() -> Fixture {
    let corpus = corpus(2000);
    let (lm, _) = train_class_lm(&french(&corpus), &corpus.lexicon, &LmTrainConfig::default()).expect("class model");
    let (kept, _) = filter_pairs(corpus.train.clone(), 40);
    let (tagged, _) = tag_pairs(&kept, &lm);
    let (joint, _) = train_bilexical(&tagged, &TmTrainConfig::default()).expect("translation model");
    let model = TransModel::new(to_bilexical(&joint), lm);
    let channel = ChannelConfig {
        n: 200,
        noise_sd: 1.75,
        ..ChannelConfig::default()
    };
    let refs: Vec<Vec<Token>> = corpus.test.iter().map(|p| p.french.clone()).collect();
    let sim = AcousticSimulator::new(corpus.phonetic.clone()).expect("simulator");
    let lattices = sim.simulate_corpus(&refs, &channel).expect("lattices");
    let english = corpus.test.iter().map(|p| p.english.clone()).collect();
    Fixture {
        corpus,
        model,
        lattices,
        english,
    }
}
