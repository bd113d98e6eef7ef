//! Perplexity, bin-averaged stego perplexity and embedding capacity.
//!
//! Under a key with `K` bins and common set `C`, the encoder's next-token
//! distribution for block `b` is the model's distribution restricted to
//! `W_b ∪ C` and renormalized. With the block uniformly distributed, the
//! probability of word `w` is
//!
//! ```text
//! p_stego(w) = 1/K · Σ_b  p(w)·[w ∈ W_b ∪ C] / (P(W_b) + P(C))
//! ```
//!
//! Tokens marked reserved in the key (`<eos>`, `<unk>` under a normal key)
//! have zero stego probability. They are skipped and counted rather than
//! folded into the average.

use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::keying::{KeySlot, StegoKey};
use crate::lm::LanguageModel;

/// Positions are scored in chunks so that LSTM contexts are not all held at once.
const CHUNK: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot evaluate an empty token stream")]
    EmptyStream,
    #[error("common fraction {0} is outside [0, 1)")]
    FractionOutOfRange(f64),
    #[error("text {text}, token {position}: index {index} carries no bits under this key")]
    Undecodable { text: usize, position: usize, index: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerplexityReport {
    /// Positions that entered the average.
    pub token_count: usize,
    pub mean_nll: f64,
    pub perplexity: f64,
    /// Positions left out because the key reserves the token.
    pub skipped: usize,
    /// Scored positions whose probability came out as exactly zero.
    pub zero_probability: usize,
    /// Stream offsets of those positions.
    pub zero_positions: Vec<usize>,
}

impl PerplexityReport {
    fn from_nlls(nlls: &[Option<f64>]) -> Result<Self, MetricsError> {
        let scored: Vec<f64> = nlls.iter().flatten().copied().collect();
        if scored.is_empty() {
            return Err(MetricsError::EmptyStream);
        }
        let mean_nll = scored.iter().sum::<f64>() / scored.len() as f64;
        let zero_positions: Vec<usize> = nlls
            .iter()
            .enumerate()
            .filter(|(_, x)| x.is_some_and(f64::is_infinite))
            .map(|(i, _)| i)
            .collect();
        Ok(PerplexityReport {
            token_count: scored.len(),
            mean_nll,
            perplexity: mean_nll.exp(),
            skipped: nlls.len() - scored.len(),
            zero_probability: zero_positions.len(),
            zero_positions,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numeric struct")
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "token_count: {}\nmean_nll: {:.6}\nperplexity: {:.4}\nskipped: {}\nzero_probability: {}\n",
            self.token_count, self.mean_nll, self.perplexity, self.skipped, self.zero_probability
        );
        if !self.zero_positions.is_empty() {
            let list: Vec<String> = self.zero_positions.iter().map(usize::to_string).collect();
            s.push_str(&format!("zero_positions: {}\n", list.join(" ")));
        }
        s
    }
}

/// Feeds `stream` through the model from a fresh message start and calls
/// `score(ctx, token)` for every position. Contexts are built sequentially,
/// scoring runs through `exec`.
fn score_stream<M, F>(model: &M, stream: &[u32], exec: Exec, score: F) -> Vec<Option<f64>>
where
    M: LanguageModel,
    F: Fn(&M::Context, u32) -> Option<f64> + Sync,
{
    let mut out = Vec::with_capacity(stream.len());
    let mut ctx = model.message_start();
    for chunk in stream.chunks(CHUNK) {
        let mut ctxs = Vec::with_capacity(chunk.len());
        for &t in chunk {
            let next = model.advance(&ctx, t).expect("stream indices are in the vocabulary");
            ctxs.push(std::mem::replace(&mut ctx, next));
        }
        out.extend(exec.map_range(chunk.len(), |i| score(&ctxs[i], chunk[i])));
    }
    out
}

/// Plain perplexity `exp(-(1/N) Σ ln p(w_i | w_<i))`.
pub fn perplexity<M: LanguageModel>(model: &M, stream: &[u32], exec: Exec) -> Result<PerplexityReport, MetricsError> {
    let nlls = score_stream(model, stream, exec, |ctx, t| {
        Some(-model.next_distribution(ctx)[t as usize].ln())
    });
    PerplexityReport::from_nlls(&nlls)
}

/// Per-bin normalizers `P(W_b) + P(C)`.
fn bin_masses(dist: &[f64], key: &StegoKey) -> Vec<f64> {
    let common: f64 = key.common().iter().map(|&c| dist[c as usize]).sum();
    key.bins()
        .iter()
        .map(|bin| bin.iter().map(|&w| dist[w as usize]).sum::<f64>() + common)
        .collect()
}

fn word_prob_with(dist: &[f64], masses: &[f64], key: &StegoKey, w: u32) -> f64 {
    let k = masses.len() as f64;
    let pw = dist[w as usize];
    match key.slot(w) {
        Some(KeySlot::Bin(b)) => pw / masses[b as usize] / k,
        Some(KeySlot::Common) => masses.iter().map(|m| pw / m).sum::<f64>() / k,
        Some(KeySlot::Reserved) | None => 0.0,
    }
}

/// Stego probability of `w` given the model's next-token distribution `dist`.
pub fn stego_word_prob(dist: &[f64], key: &StegoKey, w: u32) -> f64 {
    word_prob_with(dist, &bin_masses(dist, key), key, w)
}

/// [`stego_word_prob`] at a model context.
pub fn stego_word_prob_at<M: LanguageModel>(model: &M, ctx: &M::Context, key: &StegoKey, w: u32) -> f64 {
    stego_word_prob(&model.next_distribution(ctx), key, w)
}

/// The full stego distribution for one context.
pub fn stego_distribution(dist: &[f64], key: &StegoKey) -> Vec<f64> {
    let masses = bin_masses(dist, key);
    (0..dist.len() as u32)
        .map(|w| word_prob_with(dist, &masses, key, w))
        .collect()
}

/// Perplexity of `stream` under the bin-averaged stego distribution.
pub fn stego_perplexity<M: LanguageModel>(
    model: &M,
    key: &StegoKey,
    stream: &[u32],
    exec: Exec,
) -> Result<PerplexityReport, MetricsError> {
    let nlls = score_stream(model, stream, exec, |ctx, t| {
        if key.slot(t) == Some(KeySlot::Reserved) {
            return None;
        }
        Some(-stego_word_prob(&model.next_distribution(ctx), key, t).ln())
    });
    PerplexityReport::from_nlls(&nlls)
}

/// Expected bits per generated word when a fraction `common_fraction` of
/// words are common tokens.
pub fn capacity(block_bits: u32, common_fraction: f64) -> Result<f64, MetricsError> {
    if !(0.0..1.0).contains(&common_fraction) {
        return Err(MetricsError::FractionOutOfRange(common_fraction));
    }
    Ok((1.0 - common_fraction) * block_bits as f64)
}

pub fn bits_per_message(bits_per_word: f64, words: f64) -> f64 {
    bits_per_word * words
}

/// Share of the key-visible tokens in `stream` that are common tokens.
pub fn common_fraction(stream: &[u32], key: &StegoKey) -> f64 {
    let (mut common, mut total) = (0usize, 0usize);
    for &t in stream {
        match key.slot(t) {
            Some(KeySlot::Common) => {
                common += 1;
                total += 1;
            }
            Some(KeySlot::Bin(_)) => total += 1,
            _ => {}
        }
    }
    common as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityReport {
    pub block_bits: u32,
    pub tokens: usize,
    pub carriers: usize,
    pub common: usize,
    /// `block_bits · carriers`.
    pub bits: usize,
    pub common_fraction: f64,
    pub bits_per_word: f64,
}

impl CapacityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numeric struct")
    }

    pub fn to_kv(&self) -> String {
        format!(
            "block_bits: {}\ntokens: {}\ncarriers: {}\ncommon: {}\nbits: {}\ncommon_fraction: {:.4}\nbits_per_word: {:.4}\n",
            self.block_bits,
            self.tokens,
            self.carriers,
            self.common,
            self.bits,
            self.common_fraction,
            self.bits_per_word
        )
    }
}

/// Measured capacity of a stegotext corpus: every token must be a carrier or
/// a common token under `key`.
pub fn capacity_empirical<T: AsRef<[u32]>>(texts: &[T], key: &StegoKey) -> Result<CapacityReport, MetricsError> {
    let (mut carriers, mut common) = (0usize, 0usize);
    for (ti, text) in texts.iter().enumerate() {
        for (pi, &t) in text.as_ref().iter().enumerate() {
            match key.slot(t) {
                Some(KeySlot::Bin(_)) => carriers += 1,
                Some(KeySlot::Common) => common += 1,
                _ => {
                    return Err(MetricsError::Undecodable {
                        text: ti,
                        position: pi,
                        index: t,
                    })
                }
            }
        }
    }
    let tokens = carriers + common;
    if tokens == 0 {
        return Err(MetricsError::EmptyStream);
    }
    let common_fraction = common as f64 / tokens as f64;
    Ok(CapacityReport {
        block_bits: key.block_bits(),
        tokens,
        carriers,
        common,
        bits: carriers * key.block_bits() as usize,
        common_fraction,
        bits_per_word: (1.0 - common_fraction) * key.block_bits() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Token, Vocabulary};
    use std::sync::Arc;

    fn four_word_vocab() -> Arc<Vocabulary> {
        let counts = [("a", 40), ("b", 30), ("c", 20), ("d", 10)];
        let v = Vocabulary::from_counts(counts.iter().map(|(t, c)| (Token::new(*t).unwrap(), *c))).unwrap();
        Arc::new(v)
    }

    #[test]
    fn capacity_values() {
        assert_eq!(capacity(2, 0.0), Ok(2.0));
        assert_eq!(capacity(4, 0.5), Ok(2.0));
        assert_eq!(capacity(1, 0.35), Ok(0.65));
        assert_eq!(bits_per_message(capacity(2, 0.0).unwrap(), 16.04), 32.08);
        assert!(capacity(1, 1.0).is_err());
        assert!(capacity(1, -0.1).is_err());
    }

    #[test]
    fn stego_distribution_sums_to_one() {
        let v = four_word_vocab();
        let key = crate::keying::generate_key(&v, 1, 1, 3).unwrap();
        assert_eq!(v.len(), 6);
        let dist = [0.1, 0.3, 0.2, 0.25, 0.05, 0.1];
        let s = stego_distribution(&dist, &key);
        let reserved: f64 = (0..v.len() as u32)
            .filter(|&i| key.slot(i) == Some(KeySlot::Reserved))
            .map(|i| s[i as usize])
            .sum();
        assert_eq!(reserved, 0.0);
        let total: f64 = s.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn empirical_capacity_from_constructed_corpus() {
        let v = four_word_vocab();
        let key = crate::keying::generate_key(&v, 1, 1, 3).unwrap();
        let common = key.common()[0];
        let carrier = key.bins()[0][0];
        // 35 common tokens out of 100
        let text: Vec<u32> = (0..100).map(|i| if i % 20 < 7 { common } else { carrier }).collect();
        let r = capacity_empirical(&[text], &key).unwrap();
        assert_eq!((r.common, r.carriers, r.bits), (35, 65, 65));
        assert_eq!(r.bits_per_word, 0.65);

        let r = capacity_empirical(&[vec![carrier; 9]], &key).unwrap();
        assert_eq!(r.bits_per_word, 1.0);

        let bad = capacity_empirical(&[vec![carrier], vec![carrier, v.eos()]], &key);
        assert_eq!(
            bad,
            Err(MetricsError::Undecodable {
                text: 1,
                position: 1,
                index: v.eos()
            })
        );
    }
}
