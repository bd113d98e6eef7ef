//! Hide bit strings in generated text.
//!
//! A shared key partitions the vocabulary into `2^|B|` bins. Each block of
//! `|B|` secret bits selects a bin, and a language model picks the most
//! plausible next token from that bin. The receiver only needs the key to map
//! every token back to its bin index.
//!
//! Modules, bottom up:
//!
//! - [`corpus`]: tokenization, normalization and vocabulary construction.
//! - [`lm`]: next-token distributions from an add-k n-gram model or a word-level LSTM.
//! - [`keying`]: seeded generation and (de)serialization of the bin partition.
//! - [`codec`]: payload framing, constrained selection, encode/decode and rendering.
//! - [`metrics`]: perplexity, bin-averaged stego perplexity and capacity.
//! - [`exec`]: data-parallel helpers with a sequential fallback.

pub mod cli;
pub mod codec;
pub mod corpus;
pub mod exec;
pub mod keying;
pub mod lm;
pub mod metrics;

pub use codec::{decode, encode, BitBlock, Bits, Framing, GenPolicy, Payload, SelectMode, Stegotext};
pub use corpus::{CorpusConfig, Token, VocabHash, Vocabulary};
pub use exec::Exec;
pub use keying::{generate_key, KeySlot, StegoKey};
pub use lm::{LanguageModel, Model};
