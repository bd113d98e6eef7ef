//! Payload framing, bin-constrained generation and decoding.
//!
//! Encoding walks the payload block by block. For each block the model picks
//! a token from that block's bin or from the common set; common tokens carry
//! nothing, so generation continues until a bin token is emitted. Decoding
//! maps every token back through the key and concatenates the bin indices.

mod bits;
pub mod render;
mod select;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use self::bits::Bits;
pub use self::render::{render, RenderOptions};
use crate::corpus::{Token, VocabHash, Vocabulary};
pub use crate::keying::BitBlock;
use crate::keying::{BinOf, KeyError, StegoKey};
use crate::lm::{LanguageModel, LmError};

/// Width of the big-endian bit-length header used by [`Framing::LengthPrefixed`].
pub const LENGTH_HEADER_BITS: usize = 32;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("model vocabulary {model} does not match key vocabulary {key}")]
    ModelKeyMismatch { model: VocabHash, key: VocabHash },
    #[error("payload of {bits} bits holds no complete {block_bits}-bit block")]
    EmptyPayload { bits: usize, block_bits: u32 },
    #[error("payload of {0} bits does not fit the 32-bit length header")]
    PayloadTooLong(usize),
    #[error("a key with 0-bit blocks cannot carry a payload")]
    ZeroWidthKey,
    #[error("no admissible token has nonzero probability")]
    ZeroMass,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("token {position} ({token:?}) is not in the key's vocabulary")]
    UnknownToken { position: usize, token: String },
    #[error("token {position} ({token:?}) is reserved and carries no bits")]
    ReservedToken { position: usize, token: String },
    #[error("decoded stream has {available} bits, too short for the length header")]
    HeaderTruncated { available: usize },
    #[error("length header declares {declared} bits but only {available} follow it")]
    LengthExceeds { declared: usize, available: usize },
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Lm(#[from] LmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Framing {
    /// Blocks are cut straight from the payload; a trailing partial block is dropped.
    #[default]
    Raw,
    /// A 32-bit bit-length header precedes the payload, and the tail is zero-padded.
    LengthPrefixed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub data: Bits,
    pub framing: Framing,
}

impl Payload {
    pub fn new(data: Bits, framing: Framing) -> Self {
        Payload { data, framing }
    }

    pub fn raw(data: Bits) -> Self {
        Payload::new(data, Framing::Raw)
    }

    pub fn from_bytes(bytes: &[u8], framing: Framing) -> Self {
        Payload::new(Bits::from_bytes(bytes), framing)
    }

    /// The framed bit stream, cut into `block_bits`-wide blocks.
    pub fn to_bit_blocks(&self, block_bits: u32) -> Result<Vec<BitBlock>, CodecError> {
        if block_bits == 0 {
            return Err(CodecError::ZeroWidthKey);
        }
        match self.framing {
            Framing::Raw => Ok(self.data.blocks(block_bits)),
            Framing::LengthPrefixed => {
                let n = self.data.len();
                if n > u32::MAX as usize {
                    return Err(CodecError::PayloadTooLong(n));
                }
                let mut s = Bits::new();
                s.push_u64(n as u64, LENGTH_HEADER_BITS);
                for &b in self.data.as_slice() {
                    s.push(b);
                }
                while !s.len().is_multiple_of(block_bits as usize) {
                    s.push(false);
                }
                Ok(s.blocks(block_bits))
            }
        }
    }

    /// What [`decode`] returns for a stegotext of this payload.
    pub fn recoverable(&self, block_bits: u32) -> Bits {
        match self.framing {
            Framing::Raw if block_bits == 0 => Bits::new(),
            Framing::Raw => self
                .data
                .prefix(self.data.len() / block_bits as usize * block_bits as usize),
            Framing::LengthPrefixed => self.data.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectMode {
    /// Take the highest-scoring admissible token.
    Greedy,
    /// Draw from the temperature-scaled distribution restricted to the admissible set.
    #[default]
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenPolicy {
    pub mode: SelectMode,
    pub temperature: f64,
    pub seed: u64,
    /// Longest run of common tokens before a bin token is forced.
    pub max_common_run: usize,
}

impl Default for GenPolicy {
    fn default() -> Self {
        GenPolicy {
            mode: SelectMode::Sample,
            temperature: 1.0,
            seed: 0,
            max_common_run: 5,
        }
    }
}

impl GenPolicy {
    pub fn greedy() -> Self {
        GenPolicy {
            mode: SelectMode::Greedy,
            ..Default::default()
        }
    }

    pub fn sample(temperature: f64, seed: u64) -> Self {
        GenPolicy {
            mode: SelectMode::Sample,
            temperature,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), CodecError> {
        if self.mode == SelectMode::Sample && !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(CodecError::BadTemperature(self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stegotext {
    /// Vocabulary indices of the generated tokens.
    pub tokens: Vec<u32>,
    /// Tokens drawn from a bin, i.e. tokens that carry bits.
    pub carrier_count: usize,
    pub block_bits: u32,
}

impl Stegotext {
    pub fn encoded_bits(&self) -> usize {
        self.carrier_count * self.block_bits as usize
    }

    pub fn surfaces<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.tokens
            .iter()
            .map(|&t| vocab.token(t).map(Token::as_str).expect("generated index is in range"))
            .collect()
    }

    pub fn to_tokens(&self, vocab: &Vocabulary) -> Vec<Token> {
        self.tokens
            .iter()
            .map(|&t| vocab.token(t).expect("generated index is in range").clone())
            .collect()
    }
}

fn check_pair<M: LanguageModel + ?Sized>(key: &StegoKey, model: &M) -> Result<(), CodecError> {
    if model.vocab_hash() != key.vocab_hash() {
        return Err(CodecError::ModelKeyMismatch {
            model: model.vocab_hash(),
            key: key.vocab_hash(),
        });
    }
    Ok(())
}

/// Picks one token for `block` from its bin or the common set.
pub fn constrained_select<M: LanguageModel, R: rand::Rng>(
    model: &M,
    ctx: &M::Context,
    key: &StegoKey,
    block: BitBlock,
    policy: &GenPolicy,
    rng: &mut R,
) -> Result<u32, CodecError> {
    check_pair(key, model)?;
    policy.validate()?;
    let candidates = select::admissible(key.bin(block), key.common(), &[], true);
    select::pick(&model.scores(ctx), &candidates, policy.mode, policy.temperature, rng)
}

/// Generates tokens for each block in turn, starting from `ctx`.
///
/// Within one block, a common token already emitted is not offered again, and
/// after `max_common_run` common tokens only the bin remains admissible. This
/// keeps greedy decoding from cycling through common tokens forever.
pub fn encode_blocks<M: LanguageModel>(
    blocks: &[BitBlock],
    key: &StegoKey,
    model: &M,
    ctx: M::Context,
    policy: &GenPolicy,
) -> Result<Stegotext, CodecError> {
    check_pair(key, model)?;
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut ctx = ctx;
    let mut tokens = Vec::with_capacity(blocks.len());
    let mut used_common = Vec::new();
    for &block in blocks {
        used_common.clear();
        loop {
            let with_common = used_common.len() < policy.max_common_run;
            let candidates = select::admissible(key.bin(block), key.common(), &used_common, with_common);
            let tok = select::pick(
                &model.scores(&ctx),
                &candidates,
                policy.mode,
                policy.temperature,
                &mut rng,
            )?;
            ctx = model.advance(&ctx, tok)?;
            tokens.push(tok);
            if key.is_common(tok) {
                used_common.push(tok);
            } else {
                break;
            }
        }
    }
    Ok(Stegotext {
        tokens,
        carrier_count: blocks.len(),
        block_bits: key.block_bits(),
    })
}

/// Hides `payload` in a fresh message generated by `model`.
pub fn encode<M: LanguageModel>(
    payload: &Payload,
    key: &StegoKey,
    model: &M,
    policy: &GenPolicy,
) -> Result<Stegotext, CodecError> {
    check_pair(key, model)?;
    let blocks = payload.to_bit_blocks(key.block_bits())?;
    if blocks.is_empty() {
        return Err(CodecError::EmptyPayload {
            bits: payload.data.len(),
            block_bits: key.block_bits(),
        });
    }
    encode_blocks(&blocks, key, model, model.message_start(), policy)
}

/// Generates `n` tokens with no bin constraint.
pub fn generate_unconstrained<M: LanguageModel>(
    model: &M,
    ctx: M::Context,
    n: usize,
    policy: &GenPolicy,
) -> Result<Vec<u32>, CodecError> {
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let all: Vec<u32> = (0..model.vocab_size() as u32).collect();
    let mut ctx = ctx;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let tok = select::pick(&model.scores(&ctx), &all, policy.mode, policy.temperature, &mut rng)?;
        ctx = model.advance(&ctx, tok)?;
        out.push(tok);
    }
    Ok(out)
}

/// Recovers the bit string from token indices. Needs only the key.
pub fn decode_indices(tokens: &[u32], key: &StegoKey, framing: Framing) -> Result<Bits, CodecError> {
    let mut out = Bits::new();
    for (position, &t) in tokens.iter().enumerate() {
        match key.bin_of_token(t) {
            Ok(BinOf::Block(b)) => out.extend_block(b),
            Ok(BinOf::Common) => {}
            Err(KeyError::ReservedToken { .. }) => {
                return Err(CodecError::ReservedToken {
                    position,
                    token: key.vocab().token(t).map(|t| t.as_str().to_owned()).unwrap_or_default(),
                })
            }
            Err(KeyError::IndexOutOfRange { .. }) => {
                return Err(CodecError::UnknownToken {
                    position,
                    token: format!("#{t}"),
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    unframe(out, framing)
}

/// Recovers the bit string from token surfaces. Needs only the key.
pub fn decode<S: AsRef<str>>(tokens: &[S], key: &StegoKey, framing: Framing) -> Result<Bits, CodecError> {
    let vocab = key.vocab();
    let indices = tokens
        .iter()
        .enumerate()
        .map(|(position, t)| {
            vocab.index_of(t.as_ref()).ok_or_else(|| CodecError::UnknownToken {
                position,
                token: t.as_ref().to_owned(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    decode_indices(&indices, key, framing)
}

fn unframe(bits: Bits, framing: Framing) -> Result<Bits, CodecError> {
    match framing {
        Framing::Raw => Ok(bits),
        Framing::LengthPrefixed => {
            if bits.len() < LENGTH_HEADER_BITS {
                return Err(CodecError::HeaderTruncated { available: bits.len() });
            }
            let declared = bits.read_u64(0, LENGTH_HEADER_BITS) as usize;
            let available = bits.len() - LENGTH_HEADER_BITS;
            if declared > available {
                return Err(CodecError::LengthExceeds { declared, available });
            }
            Ok(bits.slice(LENGTH_HEADER_BITS, LENGTH_HEADER_BITS + declared))
        }
    }
}
