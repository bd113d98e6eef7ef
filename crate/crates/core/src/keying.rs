//! The shared key: a seeded partition of the carrier vocabulary into
//! `2^|B|` bins, plus an optional set of common tokens that every bin admits
//! but that carry no bits.
//!
//! Carriers are the vocabulary minus the common tokens minus `<eos>`/`<unk>`.
//! They are shuffled with a Fisher-Yates pass driven by ChaCha20 (keyed by
//! `SHA-256("STEGOKEY v1 permutation" ‖ seed_le)`, draws by rejection
//! sampling on `u64`) and dealt round-robin, so bin sizes differ by at most
//! one and both parties can rebuild the same key from the same seed.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{VocabHash, Vocabulary};

pub const DEFAULT_MAX_BLOCK_BITS: u32 = 16;

const HEADER: &str = "STEGOKEY v1";
const PERMUTATION_DOMAIN: &[u8] = b"STEGOKEY v1 permutation";

#[derive(Debug, Error, PartialEq)]
pub enum KeyError {
    #[error("block size must be at least 1 bit")]
    BlockBitsTooSmall,
    #[error("block size {bits} exceeds the cap of {cap} bits")]
    BlockBitsTooLarge { bits: u32, cap: u32 },
    #[error("{bins} bins need at least as many carrier tokens, only {carriers} available")]
    TooFewCarriers { bins: usize, carriers: usize },
    #[error("{common} common tokens plus {bins} bins exceed the vocabulary size {vocab}")]
    CommonTooLarge { common: usize, bins: usize, vocab: usize },
    #[error("key was generated for vocabulary {key} but vocabulary {vocab} was supplied")]
    HashMismatch { key: VocabHash, vocab: VocabHash },
    #[error("token index {index} is reserved and belongs to no bin")]
    ReservedToken { index: u32 },
    #[error("token index {index} out of range for vocabulary of {size}")]
    IndexOutOfRange { index: u32, size: usize },
    #[error("key violates the partition invariants: {0}")]
    PartitionViolation(String),
    #[error("malformed key file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// A block of `width` payload bits; the leftmost bit is the most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitBlock {
    value: u32,
    width: u32,
}

impl BitBlock {
    pub fn new(value: u32, width: u32) -> Option<Self> {
        if width > 31 || value >= (1u32 << width) {
            return None;
        }
        Some(BitBlock { value, width })
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(bits: &str) -> Option<Self> {
        let mut value = 0u32;
        for c in bits.chars() {
            value = (value << 1) | c.to_digit(2)?;
        }
        Self::new(value, bits.len() as u32)
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    /// Bits MSB first.
    pub fn bits(self) -> impl Iterator<Item = bool> {
        (0..self.width).rev().map(move |i| (self.value >> i) & 1 == 1)
    }
}

impl fmt::Display for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width == 0 {
            return Ok(());
        }
        write!(f, "{:0width$b}", self.value, width = self.width as usize)
    }
}

/// Role of one vocabulary entry under a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySlot {
    Bin(u32),
    Common,
    Reserved,
}

/// Result of looking a token up in the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOf {
    Block(BitBlock),
    Common,
}

#[derive(Debug, Clone)]
pub struct StegoKey {
    vocab: Arc<Vocabulary>,
    block_bits: u32,
    bins: Vec<Vec<u32>>,
    common: Vec<u32>,
    seed: u64,
    slots: Vec<KeySlot>,
}

impl PartialEq for StegoKey {
    fn eq(&self, other: &Self) -> bool {
        self.block_bits == other.block_bits
            && self.bins == other.bins
            && self.common == other.common
            && self.seed == other.seed
            && self.vocab.hash() == other.vocab.hash()
    }
}

/// Parameters for [`StegoKey::generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySpec {
    pub block_bits: u32,
    /// Number of most frequent non-reserved tokens to make common.
    pub common_count: usize,
    pub seed: u64,
    /// Also admit `<eos>` in every bin, so generated text can end messages.
    pub eos_common: bool,
    pub max_block_bits: u32,
}

impl KeySpec {
    pub fn new(block_bits: u32, common_count: usize, seed: u64) -> Self {
        KeySpec {
            block_bits,
            common_count,
            seed,
            eos_common: false,
            max_block_bits: DEFAULT_MAX_BLOCK_BITS,
        }
    }
}

/// Uniform draw from `0..bound` without modulo bias.
fn uniform_below(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let r = rng.next_u64();
        if r >= threshold {
            return r % bound;
        }
    }
}

/// The key-file permutation of `0..n` for `seed`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut h = Sha256::new();
    h.update(PERMUTATION_DOMAIN);
    h.update(seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = uniform_below(&mut rng, i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Shorthand for [`StegoKey::generate`] with default options.
pub fn generate_key(
    vocab: &Arc<Vocabulary>,
    block_bits: u32,
    common_count: usize,
    seed: u64,
) -> Result<StegoKey, KeyError> {
    StegoKey::generate(vocab, &KeySpec::new(block_bits, common_count, seed))
}

impl StegoKey {
    pub fn generate(vocab: &Arc<Vocabulary>, spec: &KeySpec) -> Result<Self, KeyError> {
        if spec.block_bits < 1 {
            return Err(KeyError::BlockBitsTooSmall);
        }
        let cap = spec.max_block_bits.min(DEFAULT_MAX_BLOCK_BITS);
        if spec.block_bits > cap {
            return Err(KeyError::BlockBitsTooLarge {
                bits: spec.block_bits,
                cap,
            });
        }
        let n_bins = 1usize << spec.block_bits;
        if spec.common_count + n_bins > vocab.len() {
            return Err(KeyError::CommonTooLarge {
                common: spec.common_count,
                bins: n_bins,
                vocab: vocab.len(),
            });
        }
        let regular: Vec<u32> = (0..vocab.len() as u32).filter(|&i| !vocab.is_reserved(i)).collect();
        let mut common: Vec<u32> = regular.iter().copied().take(spec.common_count).collect();
        let carriers: Vec<u32> = regular.iter().copied().skip(spec.common_count).collect();
        if carriers.len() < n_bins {
            return Err(KeyError::TooFewCarriers {
                bins: n_bins,
                carriers: carriers.len(),
            });
        }
        if spec.eos_common {
            common.push(vocab.eos());
        }
        let mut bins = vec![Vec::with_capacity(carriers.len() / n_bins + 1); n_bins];
        for (slot, &p) in seeded_permutation(carriers.len(), spec.seed).iter().enumerate() {
            bins[slot % n_bins].push(carriers[p]);
        }
        Self::from_parts(vocab.clone(), spec.block_bits, bins, common, spec.seed)
    }

    /// The single-bin key: every token, reserved ones included, is admitted
    /// for every (zero-width) block. Useful as the non-steganographic
    /// baseline; it carries no bits.
    pub fn identity(vocab: &Arc<Vocabulary>) -> Self {
        let all: Vec<u32> = (0..vocab.len() as u32).collect();
        Self::from_parts(vocab.clone(), 0, vec![all], Vec::new(), 0).expect("identity key is always valid")
    }

    /// Builds a key from explicit bins, checking every partition invariant.
    pub fn from_parts(
        vocab: Arc<Vocabulary>,
        block_bits: u32,
        mut bins: Vec<Vec<u32>>,
        mut common: Vec<u32>,
        seed: u64,
    ) -> Result<Self, KeyError> {
        let violation = |m: String| Err(KeyError::PartitionViolation(m));
        if block_bits > DEFAULT_MAX_BLOCK_BITS {
            return Err(KeyError::BlockBitsTooLarge {
                bits: block_bits,
                cap: DEFAULT_MAX_BLOCK_BITS,
            });
        }
        if bins.len() != 1usize << block_bits {
            return violation(format!("{} bins for a {}-bit block", bins.len(), block_bits));
        }
        let size = vocab.len();
        let mut slots = vec![KeySlot::Reserved; size];
        for b in bins.iter_mut() {
            b.sort_unstable();
        }
        common.sort_unstable();
        for &c in &common {
            if c as usize >= size {
                return Err(KeyError::IndexOutOfRange { index: c, size });
            }
            if c == vocab.unk() || block_bits == 0 {
                return violation(format!("token {c} cannot be common"));
            }
            if slots[c as usize] != KeySlot::Reserved {
                return violation(format!("token {c} listed twice as common"));
            }
            slots[c as usize] = KeySlot::Common;
        }
        for (bi, bin) in bins.iter().enumerate() {
            for &t in bin {
                if t as usize >= size {
                    return Err(KeyError::IndexOutOfRange { index: t, size });
                }
                if block_bits > 0 && vocab.is_reserved(t) {
                    return violation(format!("reserved token {t} used as a carrier"));
                }
                match slots[t as usize] {
                    KeySlot::Reserved => slots[t as usize] = KeySlot::Bin(bi as u32),
                    KeySlot::Common => return violation(format!("token {t} is both common and a carrier")),
                    KeySlot::Bin(other) => return violation(format!("token {t} appears in bins {other} and {bi}")),
                }
            }
        }
        for i in 0..size as u32 {
            if slots[i as usize] == KeySlot::Reserved && !vocab.is_reserved(i) {
                return violation(format!("token {i} is neither common nor in any bin"));
            }
        }
        let (min, max) = bins
            .iter()
            .map(Vec::len)
            .fold((usize::MAX, 0), |(lo, hi), n| (lo.min(n), hi.max(n)));
        if max - min > 1 {
            return violation(format!("bin sizes range from {min} to {max}"));
        }
        if min == 0 {
            return violation("empty bin".into());
        }
        Ok(StegoKey {
            vocab,
            block_bits,
            bins,
            common,
            seed,
            slots,
        })
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn vocab_hash(&self) -> VocabHash {
        self.vocab.hash()
    }

    pub fn block_bits(&self) -> u32 {
        self.block_bits
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[Vec<u32>] {
        &self.bins
    }

    pub fn bin(&self, block: BitBlock) -> &[u32] {
        &self.bins[block.value() as usize]
    }

    pub fn common(&self) -> &[u32] {
        &self.common
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn slot(&self, index: u32) -> Option<KeySlot> {
        self.slots.get(index as usize).copied()
    }

    pub fn slots(&self) -> &[KeySlot] {
        &self.slots
    }

    pub fn is_common(&self, index: u32) -> bool {
        self.slot(index) == Some(KeySlot::Common)
    }

    pub fn bin_of_token(&self, index: u32) -> Result<BinOf, KeyError> {
        match self.slot(index) {
            None => Err(KeyError::IndexOutOfRange {
                index,
                size: self.slots.len(),
            }),
            Some(KeySlot::Reserved) => Err(KeyError::ReservedToken { index }),
            Some(KeySlot::Common) => Ok(BinOf::Common),
            Some(KeySlot::Bin(b)) => Ok(BinOf::Block(BitBlock::new(b, self.block_bits).expect("bin index fits"))),
        }
    }

    fn write_tokens(&self, s: &mut String, tokens: &[u32]) {
        for &t in tokens {
            s.push('\t');
            s.push_str(self.vocab.token(t).expect("validated index").as_str());
        }
        s.push('\n');
    }

    /// Serializes to the `STEGOKEY v1` text format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "block_bits: {}", self.block_bits).unwrap();
        writeln!(s, "vocab_hash: {}", self.vocab.hash()).unwrap();
        writeln!(s, "seed: {}", self.seed).unwrap();
        s.push_str("common:");
        self.write_tokens(&mut s, &self.common);
        for (i, bin) in self.bins.iter().enumerate() {
            let label = BitBlock::new(i as u32, self.block_bits).expect("bin index fits");
            write!(s, "bin {label}:").unwrap();
            self.write_tokens(&mut s, bin);
        }
        s
    }

    /// Parses a key file against `vocab`, which must hash to the recorded value.
    pub fn parse(text: &str, vocab: &Arc<Vocabulary>) -> Result<Self, KeyError> {
        let malformed = |line: usize, reason: &str| KeyError::Malformed {
            line,
            reason: reason.to_owned(),
        };
        let lines: Vec<&str> = text.lines().collect();
        let field = |i: usize, name: &str| -> Result<&str, KeyError> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(name))
                .and_then(|r| r.strip_prefix(": "))
                .ok_or_else(|| malformed(i + 1, &format!("expected `{name}: ...`")))
        };
        if lines.first() != Some(&HEADER) {
            return Err(malformed(1, "missing STEGOKEY v1 header"));
        }
        let block_bits: u32 = field(1, "block_bits")?
            .parse()
            .map_err(|_| malformed(2, "block_bits is not an integer"))?;
        if block_bits > DEFAULT_MAX_BLOCK_BITS {
            return Err(KeyError::BlockBitsTooLarge {
                bits: block_bits,
                cap: DEFAULT_MAX_BLOCK_BITS,
            });
        }
        let hash = VocabHash::from_hex(field(2, "vocab_hash")?).ok_or_else(|| malformed(3, "bad vocab_hash"))?;
        if hash != vocab.hash() {
            return Err(KeyError::HashMismatch {
                key: hash,
                vocab: vocab.hash(),
            });
        }
        let seed: u64 = field(3, "seed")?
            .parse()
            .map_err(|_| malformed(4, "seed is not an integer"))?;

        let tokens_after = |i: usize, label: &str| -> Result<Vec<u32>, KeyError> {
            let line = lines
                .get(i)
                .and_then(|l| l.strip_prefix(label))
                .ok_or_else(|| malformed(i + 1, &format!("expected `{label}`")))?;
            if line.is_empty() {
                return Ok(Vec::new());
            }
            let rest = line
                .strip_prefix('\t')
                .ok_or_else(|| malformed(i + 1, "tokens must be tab-separated"))?;
            let mut seen = HashSet::new();
            rest.split('\t')
                .map(|t| {
                    let idx = vocab
                        .index_of(t)
                        .ok_or_else(|| malformed(i + 1, &format!("token {t:?} not in vocabulary")))?;
                    if !seen.insert(idx) {
                        return Err(KeyError::PartitionViolation(format!(
                            "token {t:?} repeated on line {}",
                            i + 1
                        )));
                    }
                    Ok(idx)
                })
                .collect()
        };
        let common = tokens_after(4, "common:")?;
        let n_bins = 1usize << block_bits;
        let mut bins = Vec::with_capacity(n_bins);
        for b in 0..n_bins {
            let label = format!("bin {}:", BitBlock::new(b as u32, block_bits).expect("fits"));
            bins.push(tokens_after(5 + b, &label)?);
        }
        if lines.len() > 5 + n_bins {
            return Err(malformed(6 + n_bins, "trailing data"));
        }
        Self::from_parts(vocab.clone(), block_bits, bins, common, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn vocab_of(n: usize) -> Arc<Vocabulary> {
        Arc::new(
            Vocabulary::from_counts((0..n).map(|i| (Token::new(format!("w{i:03}")).unwrap(), (n - i) as u64))).unwrap(),
        )
    }

    #[test]
    fn bit_block_parsing_and_display() {
        let b = BitBlock::parse("10").unwrap();
        assert_eq!(b.value(), 2);
        assert_eq!(b.to_string(), "10");
        assert_eq!(BitBlock::new(1, 4).unwrap().to_string(), "0001");
        assert!(BitBlock::new(4, 2).is_none());
        assert!(BitBlock::parse("1x").is_none());
        assert_eq!(
            BitBlock::parse("1011").unwrap().bits().collect::<Vec<_>>(),
            [true, false, true, true]
        );
    }

    #[test]
    fn eight_carriers_four_bins() {
        let v = vocab_of(8);
        let key = generate_key(&v, 2, 0, 11).unwrap();
        assert_eq!(key.bin_count(), 4);
        let mut all: Vec<u32> = key.bins().iter().flatten().copied().collect();
        assert!(key.bins().iter().all(|b| b.len() == 2));
        all.sort();
        let carriers: Vec<u32> = (0..v.len() as u32).filter(|&i| !v.is_reserved(i)).collect();
        assert_eq!(all, carriers);
    }

    #[test]
    fn nine_carriers_deal_three_two_two_two() {
        let key = generate_key(&vocab_of(9), 2, 0, 5).unwrap();
        let sizes: Vec<usize> = key.bins().iter().map(Vec::len).collect();
        assert_eq!(sizes, [3, 2, 2, 2]);
    }

    #[test]
    fn common_tokens_are_top_frequency_and_not_carriers() {
        let v = vocab_of(20);
        let key = generate_key(&v, 1, 3, 2).unwrap();
        let names: Vec<&str> = key.common().iter().map(|&i| v.token(i).unwrap().as_str()).collect();
        assert_eq!(names, ["w000", "w001", "w002"]);
        for &c in key.common() {
            assert_eq!(key.bin_of_token(c), Ok(BinOf::Common));
            assert!(key.bins().iter().all(|b| !b.contains(&c)));
        }
        assert_eq!(
            key.bin_of_token(v.eos()),
            Err(KeyError::ReservedToken { index: v.eos() })
        );
        let spec = KeySpec {
            eos_common: true,
            ..KeySpec::new(1, 3, 2)
        };
        let with_eos = StegoKey::generate(&v, &spec).unwrap();
        assert!(with_eos.is_common(v.eos()));
        assert_eq!(with_eos.bins(), key.bins());
    }

    #[test]
    fn bin_of_token_inverts_membership() {
        let v = vocab_of(37);
        let key = generate_key(&v, 3, 4, 99).unwrap();
        for (b, bin) in key.bins().iter().enumerate() {
            for &t in bin {
                assert_eq!(
                    key.bin_of_token(t),
                    Ok(BinOf::Block(BitBlock::new(b as u32, 3).unwrap()))
                );
            }
        }
        assert!(matches!(key.bin_of_token(1000), Err(KeyError::IndexOutOfRange { .. })));
    }

    #[test]
    fn generation_errors() {
        let v = vocab_of(8);
        assert_eq!(generate_key(&v, 0, 0, 1), Err(KeyError::BlockBitsTooSmall));
        assert!(matches!(
            generate_key(&v, 17, 0, 1),
            Err(KeyError::BlockBitsTooLarge { .. })
        ));
        assert!(matches!(
            generate_key(&v, 4, 0, 1),
            Err(KeyError::CommonTooLarge { .. })
        ));
        assert!(matches!(
            generate_key(&v, 3, 1, 1),
            Err(KeyError::TooFewCarriers { .. })
        ));
        let capped = KeySpec {
            max_block_bits: 1,
            ..KeySpec::new(2, 0, 1)
        };
        assert!(matches!(
            StegoKey::generate(&v, &capped),
            Err(KeyError::BlockBitsTooLarge { cap: 1, .. })
        ));
    }

    #[test]
    fn same_seed_same_key() {
        let v = vocab_of(50);
        assert_eq!(generate_key(&v, 2, 5, 7).unwrap(), generate_key(&v, 2, 5, 7).unwrap());
        assert_ne!(generate_key(&v, 2, 5, 7).unwrap(), generate_key(&v, 2, 5, 8).unwrap());
    }

    #[test]
    fn permutation_is_a_permutation() {
        for n in [0, 1, 2, 10, 257] {
            let mut p = seeded_permutation(n, 3);
            p.sort();
            assert_eq!(p, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn file_format_round_trip() {
        let v = vocab_of(12);
        let key = generate_key(&v, 2, 2, 42).unwrap();
        let text = key.to_file_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "STEGOKEY v1");
        assert_eq!(lines[1], "block_bits: 2");
        assert_eq!(lines[3], "seed: 42");
        assert_eq!(lines[4], "common:\tw000\tw001");
        assert!(lines[5].starts_with("bin 00:\t"));
        assert!(lines[8].starts_with("bin 11:\t"));
        let back = StegoKey::parse(&text, &v).unwrap();
        assert_eq!(back, key);
        assert_eq!(back.to_file_string(), text);
    }

    #[test]
    fn file_with_duplicate_token_is_rejected() {
        let v = vocab_of(12);
        let text = generate_key(&v, 1, 0, 1).unwrap().to_file_string();
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let stolen = lines[5].split('\t').nth(1).unwrap().to_owned();
        lines[6].push('\t');
        lines[6].push_str(&stolen);
        let err = StegoKey::parse(&(lines.join("\n") + "\n"), &v).unwrap_err();
        assert!(matches!(err, KeyError::PartitionViolation(_)), "{err}");
    }

    #[test]
    fn file_for_other_vocab_is_rejected() {
        let text = generate_key(&vocab_of(12), 1, 0, 1).unwrap().to_file_string();
        assert!(matches!(
            StegoKey::parse(&text, &vocab_of(13)),
            Err(KeyError::HashMismatch { .. })
        ));
    }

    #[test]
    fn identity_key_admits_everything() {
        let v = vocab_of(5);
        let key = StegoKey::identity(&v);
        assert_eq!(key.bin_count(), 1);
        assert_eq!(key.bins()[0].len(), v.len());
        assert_eq!(
            key.bin_of_token(v.eos()),
            Ok(BinOf::Block(BitBlock::new(0, 0).unwrap()))
        );
        assert_eq!(StegoKey::parse(&key.to_file_string(), &v).unwrap(), key);
    }
}
