#![allow(dead_code)]

use std::sync::Arc;

use steglm::corpus::{self, CorpusConfig, Token, VocabHash, Vocabulary};
use steglm::lm::{LanguageModel, LmError};

pub const DESK_CORPUS: &str = include_str!("../../../../data/desk_corpus.txt");

/// A context-free model with a fixed next-token distribution.
pub struct FixedModel {
    pub probs: Vec<f64>,
    pub hash: VocabHash,
    pub eos: u32,
}

impl FixedModel {
    pub fn new(vocab: &Vocabulary, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), vocab.len());
        FixedModel {
            probs,
            hash: vocab.hash(),
            eos: vocab.eos(),
        }
    }

    pub fn uniform(vocab: &Vocabulary) -> Self {
        Self::new(vocab, vec![1.0 / vocab.len() as f64; vocab.len()])
    }
}

impl LanguageModel for FixedModel {
    type Context = ();

    fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    fn vocab_hash(&self) -> VocabHash {
        self.hash
    }

    fn eos(&self) -> u32 {
        self.eos
    }

    fn start_context(&self) {}

    fn scores(&self, _: &()) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    fn advance(&self, _: &(), _: u32) -> Result<(), LmError> {
        Ok(())
    }
}

/// Vocabulary over the given surfaces, all with equal counts, so indices
/// follow lexicographic order after the sentinels are placed.
pub fn flat_vocab(words: &[&str]) -> Arc<Vocabulary> {
    Arc::new(Vocabulary::from_counts(words.iter().map(|w| (Token::new(*w).unwrap(), 5))).unwrap())
}

pub fn desk() -> (Arc<Vocabulary>, Vec<u32>) {
    let cfg = CorpusConfig::default();
    let tokens = corpus::tokenize(DESK_CORPUS, &cfg);
    let vocab = corpus::build_vocab(&tokens, &cfg).unwrap();
    let stream = vocab.encode(&tokens);
    (Arc::new(vocab), stream)
}
