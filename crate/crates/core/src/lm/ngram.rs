//! Add-k smoothed n-gram model.
//!
//! Counts are kept for every order up to `n`. A query uses the longest
//! suffix of the context that was observed during training and applies add-k
//! smoothing at that order:
//!
//! `P(w | ctx) = (c(ctx, w) + k) / (c(ctx) + k·|V|)`
//!
//! With no training data at all every query falls through to the empty
//! context and the distribution is uniform.

use std::collections::BTreeMap;

use super::{check_index, LanguageModel, LmError};
use crate::corpus::{VocabHash, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub order: usize,
    /// Add-k smoothing constant.
    pub k: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig { order: 3, k: 0.1 }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.order < 1 {
            return Err(LmError::InvalidHyperparams("n-gram order must be at least 1".into()));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(LmError::InvalidHyperparams(
                "smoothing constant k must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ContextCounts {
    pub(crate) total: u64,
    pub(crate) next: BTreeMap<u32, u64>,
}

/// The last `order - 1` tokens (fewer at the start of a stream).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NgramContext(pub Vec<u32>);

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    config: NgramConfig,
    vocab_size: usize,
    vocab_hash: VocabHash,
    eos: u32,
    /// `tables[m]` maps a context of length `m` to its continuation counts.
    pub(crate) tables: Vec<BTreeMap<Vec<u32>, ContextCounts>>,
}

impl NgramModel {
    /// A model with all counts at zero.
    pub fn untrained(vocab: &Vocabulary, config: NgramConfig) -> Result<Self, LmError> {
        config.validate()?;
        Ok(NgramModel {
            config,
            vocab_size: vocab.len(),
            vocab_hash: vocab.hash(),
            eos: vocab.eos(),
            tables: vec![BTreeMap::new(); config.order],
        })
    }

    pub(crate) fn from_parts(
        config: NgramConfig,
        vocab_size: usize,
        vocab_hash: VocabHash,
        eos: u32,
        tables: Vec<BTreeMap<Vec<u32>, ContextCounts>>,
    ) -> Self {
        NgramModel {
            config,
            vocab_size,
            vocab_hash,
            eos,
            tables,
        }
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    /// Raw count of `next` following `context` (context length < order).
    pub fn count(&self, context: &[u32], next: u32) -> u64 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .and_then(|c| c.next.get(&next).copied())
            .unwrap_or(0)
    }

    /// Adds every n-gram of order `1..=n` in `stream` to the tables.
    pub fn observe(&mut self, stream: &[u32]) -> Result<(), LmError> {
        for &t in stream {
            check_index(t, self.vocab_size)?;
        }
        for i in 0..stream.len() {
            for m in 0..self.config.order.min(i + 1) {
                let entry = self.tables[m].entry(stream[i - m..i].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(stream[i]).or_default() += 1;
            }
        }
        Ok(())
    }

    fn counts_for(&self, ctx: &[u32]) -> Option<&ContextCounts> {
        let max = ctx.len().min(self.config.order - 1);
        (0..=max)
            .rev()
            .find_map(|m| self.tables[m].get(&ctx[ctx.len() - m..]).filter(|c| c.total > 0))
    }

    /// Smoothed probabilities for the next token.
    pub fn probabilities(&self, ctx: &NgramContext) -> Vec<f64> {
        let k = self.config.k;
        let v = self.vocab_size as f64;
        match self.counts_for(&ctx.0) {
            None => vec![1.0 / v; self.vocab_size],
            Some(c) => {
                let denom = c.total as f64 + k * v;
                let mut p = vec![k / denom; self.vocab_size];
                for (&w, &n) in &c.next {
                    p[w as usize] = (n as f64 + k) / denom;
                }
                p
            }
        }
    }
}

impl LanguageModel for NgramModel {
    type Context = NgramContext;

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn vocab_hash(&self) -> VocabHash {
        self.vocab_hash
    }

    fn eos(&self) -> u32 {
        self.eos
    }

    fn start_context(&self) -> NgramContext {
        NgramContext::default()
    }

    fn scores(&self, ctx: &NgramContext) -> Vec<f64> {
        self.probabilities(ctx).into_iter().map(f64::ln).collect()
    }

    fn next_distribution(&self, ctx: &NgramContext) -> Vec<f64> {
        self.probabilities(ctx)
    }

    fn advance(&self, ctx: &NgramContext, token: u32) -> Result<NgramContext, LmError> {
        check_index(token, self.vocab_size)?;
        let keep = self.config.order - 1;
        let mut next = ctx.0.clone();
        next.push(token);
        if next.len() > keep {
            next.drain(..next.len() - keep);
        }
        Ok(NgramContext(next))
    }
}

/// Counts all n-grams of `stream` (vocabulary indices).
pub fn train_ngram(stream: &[u32], vocab: &Vocabulary, config: NgramConfig) -> Result<NgramModel, LmError> {
    let mut model = NgramModel::untrained(vocab, config)?;
    model.observe(stream)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn vocab(words: &[(&str, u64)]) -> Vocabulary {
        Vocabulary::from_counts(words.iter().map(|(w, c)| (Token::new(*w).unwrap(), *c))).unwrap()
    }

    #[test]
    fn untrained_model_is_uniform() {
        let v = vocab(&[("a", 1), ("b", 1), ("c", 1)]);
        let m = NgramModel::untrained(&v, NgramConfig { order: 2, k: 0.5 }).unwrap();
        let ctx = m.advance(&m.start_context(), 0).unwrap();
        for p in m.next_distribution(&ctx) {
            assert!((p - 1.0 / v.len() as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn bigram_hand_counts() {
        // "a b a b": after "a", b was seen twice and nothing else; c(a·) = 2
        let v = vocab(&[("a", 2), ("b", 2)]);
        let (a, b) = (v.index_of("a").unwrap(), v.index_of("b").unwrap());
        for k in [0.1, 1.0, 2.5] {
            let m = train_ngram(&[a, b, a, b], &v, NgramConfig { order: 2, k }).unwrap();
            let ctx = m.advance(&m.start_context(), a).unwrap();
            let p = m.next_distribution(&ctx);
            let expected = (2.0 + k) / (2.0 + k * v.len() as f64);
            assert!((p[b as usize] - expected).abs() < 1e-15);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unigram_hand_counts() {
        // corpus "a a" over a 3-token index space, k = 1: P(a) = (2+1)/(2+3)
        let cfg = NgramConfig { order: 1, k: 1.0 };
        let mut m = NgramModel::from_parts(cfg, 3, VocabHash([0; 32]), 2, vec![BTreeMap::new()]);
        m.observe(&[0, 0]).unwrap();
        let p = m.next_distribution(&m.start_context());
        assert!((p[0] - 0.6).abs() < 1e-15);
        assert!((p[1] - 0.2).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_context_is_unigram() {
        let v = vocab(&[("a", 3), ("b", 1)]);
        let (a, b) = (v.index_of("a").unwrap(), v.index_of("b").unwrap());
        let tri = train_ngram(&[a, a, b, a], &v, NgramConfig { order: 3, k: 0.2 }).unwrap();
        let uni = train_ngram(&[a, a, b, a], &v, NgramConfig { order: 1, k: 0.2 }).unwrap();
        assert_eq!(
            tri.next_distribution(&tri.start_context()),
            uni.next_distribution(&uni.start_context())
        );
    }

    #[test]
    fn unseen_context_backs_off() {
        let v = vocab(&[("a", 3), ("b", 1), ("c", 0)]);
        let (a, b, c) = (
            v.index_of("a").unwrap(),
            v.index_of("b").unwrap(),
            v.index_of("c").unwrap(),
        );
        let m = train_ngram(&[a, b, a, a], &v, NgramConfig { order: 2, k: 0.1 }).unwrap();
        let unseen = m.advance(&m.start_context(), c).unwrap();
        assert_eq!(m.next_distribution(&unseen), m.next_distribution(&m.start_context()));
    }

    #[test]
    fn window_shift() {
        let v = vocab(&[("a", 1), ("b", 1), ("c", 1)]);
        let m = NgramModel::untrained(&v, NgramConfig { order: 3, k: 1.0 }).unwrap();
        let ctx = NgramContext(vec![0, 1]);
        assert_eq!(m.advance(&ctx, 2).unwrap(), NgramContext(vec![1, 2]));
        assert!(matches!(m.advance(&ctx, 99), Err(LmError::IndexOutOfRange { .. })));
        let uni = NgramModel::untrained(&v, NgramConfig { order: 1, k: 1.0 }).unwrap();
        assert_eq!(uni.advance(&ctx, 2).unwrap(), NgramContext(vec![]));
    }

    #[test]
    fn rejects_bad_config() {
        let v = vocab(&[("a", 1), ("b", 1)]);
        assert!(NgramModel::untrained(&v, NgramConfig { order: 0, k: 1.0 }).is_err());
        assert!(NgramModel::untrained(&v, NgramConfig { order: 2, k: 0.0 }).is_err());
    }
}
