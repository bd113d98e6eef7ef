//! Next-token distributions over a fixed vocabulary.
//!
//! Two backends implement [`LanguageModel`]: an add-k smoothed n-gram model and
//! a word-level LSTM trained with truncated backpropagation through time.
//! [`Model`] wraps either one so that callers can load whatever a model file
//! contains.

mod io;
pub mod lstm;
pub mod ngram;
pub mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::{VocabHash, Vocabulary};

pub use io::{load_model, save_model};
pub use lstm::{LstmHyperparams, LstmModel, LstmState};
pub use ngram::{train_ngram, NgramConfig, NgramContext, NgramModel};
pub use train::{train_lstm, EpochRecord, TrainOptions, TrainedLstm};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("token index {index} out of range for vocabulary of {size}")]
    IndexOutOfRange { index: u32, size: usize },
    #[error("model was built for vocabulary {expected} but vocabulary {found} was supplied")]
    VocabMismatch { expected: VocabHash, found: VocabHash },
    #[error("model has {model} outputs but the vocabulary has {vocab} tokens")]
    SizeMismatch { model: usize, vocab: usize },
    #[error("context does not belong to this model backend")]
    ForeignContext,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("corpus too small: need at least {need} tokens, have {have}")]
    CorpusTooSmall { need: usize, have: usize },
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("malformed model file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A next-token distribution provider.
///
/// Contexts are immutable values: [`advance`](LanguageModel::advance) returns
/// a new context and never touches the old one, so the same context can be
/// queried repeatedly or shared between threads.
pub trait LanguageModel: Sync {
    type Context: Clone + Send + Sync;

    fn vocab_size(&self) -> usize;

    fn vocab_hash(&self) -> VocabHash;

    /// Index of `<eos>` in the model's vocabulary.
    fn eos(&self) -> u32;

    /// The state before any token has been consumed.
    fn start_context(&self) -> Self::Context;

    /// Unnormalized log-probabilities, one per vocabulary entry.
    fn scores(&self, ctx: &Self::Context) -> Vec<f64>;

    fn advance(&self, ctx: &Self::Context, token: u32) -> Result<Self::Context, LmError>;

    fn next_distribution(&self, ctx: &Self::Context) -> Vec<f64> {
        softmax(&self.scores(ctx))
    }

    /// Start state after consuming `<eos>`, i.e. the state at the beginning of
    /// a fresh message.
    fn message_start(&self) -> Self::Context {
        self.advance(&self.start_context(), self.eos())
            .expect("eos index is within the vocabulary")
    }
}

/// Checks that `model` was built for `vocab`.
pub fn check_vocab<M: LanguageModel + ?Sized>(model: &M, vocab: &Vocabulary) -> Result<(), LmError> {
    if model.vocab_size() != vocab.len() {
        return Err(LmError::SizeMismatch {
            model: model.vocab_size(),
            vocab: vocab.len(),
        });
    }
    if model.vocab_hash() != vocab.hash() {
        return Err(LmError::VocabMismatch {
            expected: model.vocab_hash(),
            found: vocab.hash(),
        });
    }
    Ok(())
}

pub(crate) fn check_index(index: u32, size: usize) -> Result<(), LmError> {
    if (index as usize) < size {
        Ok(())
    } else {
        Err(LmError::IndexOutOfRange { index, size })
    }
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// `ln softmax(scores)`, computed with the log-sum-exp shift.
pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

/// Either backend, as stored in a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ngram(NgramModel),
    Lstm(LstmModel),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelContext {
    Ngram(NgramContext),
    Lstm(LstmState),
}

impl Model {
    pub fn backend_name(&self) -> &'static str {
        match self {
            Model::Ngram(_) => "ngram",
            Model::Lstm(_) => "lstm",
        }
    }
}

impl LanguageModel for Model {
    type Context = ModelContext;

    fn vocab_size(&self) -> usize {
        match self {
            Model::Ngram(m) => m.vocab_size(),
            Model::Lstm(m) => m.vocab_size(),
        }
    }

    fn vocab_hash(&self) -> VocabHash {
        match self {
            Model::Ngram(m) => m.vocab_hash(),
            Model::Lstm(m) => m.vocab_hash(),
        }
    }

    fn eos(&self) -> u32 {
        match self {
            Model::Ngram(m) => m.eos(),
            Model::Lstm(m) => m.eos(),
        }
    }

    fn start_context(&self) -> ModelContext {
        match self {
            Model::Ngram(m) => ModelContext::Ngram(m.start_context()),
            Model::Lstm(m) => ModelContext::Lstm(m.start_context()),
        }
    }

    fn scores(&self, ctx: &ModelContext) -> Vec<f64> {
        match (self, ctx) {
            (Model::Ngram(m), ModelContext::Ngram(c)) => m.scores(c),
            (Model::Lstm(m), ModelContext::Lstm(c)) => m.scores(c),
            _ => panic!("context does not belong to this model backend"),
        }
    }

    fn advance(&self, ctx: &ModelContext, token: u32) -> Result<ModelContext, LmError> {
        match (self, ctx) {
            (Model::Ngram(m), ModelContext::Ngram(c)) => m.advance(c, token).map(ModelContext::Ngram),
            (Model::Lstm(m), ModelContext::Lstm(c)) => m.advance(c, token).map(ModelContext::Lstm),
            _ => Err(LmError::ForeignContext),
        }
    }
}
