//! Tokenization, normalization and vocabulary construction.
//!
//! Raw input is one message per line. Each line is split on whitespace, then
//! leading and trailing punctuation is detached into single-character tokens.
//! Mentions and URLs are optionally collapsed into the `<user>` and `<url>`
//! classes, and consecutive messages are separated by `<eos>`.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const USER: &str = "<user>";
pub const URL: &str = "<url>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

const VOCAB_HEADER: &str = "STEGOVOCAB v1";

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("invalid token {0:?}: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),
    #[error("cannot build a vocabulary from an empty token stream")]
    EmptyCorpus,
    #[error("vocabulary has {0} non-reserved tokens; at least 2 are needed to form bins")]
    TooSmall(usize),
    #[error("max_vocab must be at least 4 (two reserved tokens plus two carriers), got {0}")]
    MaxVocabTooSmall(usize),
    #[error("requested top {k} tokens from a vocabulary of {size}")]
    TopKTooLarge { k: usize, size: usize },
    #[error("malformed vocabulary file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// A single word, punctuation mark or reserved class marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    pub fn new(surface: impl Into<String>) -> Result<Self, CorpusError> {
        let surface = surface.into();
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidToken(surface));
        }
        Ok(Token(surface))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True for `<eos>` and `<unk>`, which never carry payload bits.
    pub fn is_reserved(&self) -> bool {
        self.0 == EOS || self.0 == UNK
    }

    fn from_trusted(s: &str) -> Self {
        debug_assert!(!s.is_empty() && !s.chars().any(char::is_whitespace));
        Token(s.to_owned())
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusConfig {
    pub lowercase: bool,
    pub replace_users_urls: bool,
    pub drop_retweets: bool,
    /// Upper bound on |V|, reserved tokens included.
    pub max_vocab: Option<usize>,
    pub min_count: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            lowercase: true,
            replace_users_urls: true,
            drop_retweets: false,
            max_vocab: None,
            min_count: 1,
        }
    }
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(?:[a-z][a-z0-9+.-]*://|www\.)\S+$").unwrap())
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '¡' | '¿' | '\u{2013}' | '\u{2014}'
        )
}

fn push_chars(out: &mut Vec<Token>, s: &str) {
    for c in s.chars() {
        let mut buf = [0u8; 4];
        out.push(Token::from_trusted(c.encode_utf8(&mut buf)));
    }
}

/// Splits `chunk` into its leading punctuation, core and trailing punctuation.
/// A leading `#` stays attached to the word it introduces.
fn split_punct(chunk: &str) -> (&str, &str, &str) {
    let core_start = chunk
        .char_indices()
        .find(|&(i, c)| !is_punct(c) || (c == '#' && chunk[i + 1..].starts_with(|n: char| n.is_alphanumeric())))
        .map(|(i, _)| i)
        .unwrap_or(chunk.len());
    let rest = &chunk[core_start..];
    let core_len = rest
        .char_indices()
        .rev()
        .find(|&(_, c)| !is_punct(c))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    (&chunk[..core_start], &rest[..core_len], &rest[core_len..])
}

fn tokenize_chunk(chunk: &str, config: &CorpusConfig, out: &mut Vec<Token>) {
    if matches!(chunk, USER | URL | EOS | UNK) {
        out.push(Token::from_trusted(chunk));
        return;
    }
    if config.replace_users_urls {
        if url_regex().is_match(chunk) {
            let (_, _, trail) = split_punct(chunk);
            // trailing slashes and the like belong to the URL itself
            let trail: String = trail
                .chars()
                .skip_while(|c| !matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | ')' | '"' | '\''))
                .collect();
            out.push(Token::from_trusted(URL));
            push_chars(out, &trail);
            return;
        }
        if let Some(rest) = chunk.strip_prefix('@') {
            let (_, core, trail) = split_punct(rest);
            if !core.is_empty() {
                out.push(Token::from_trusted(USER));
                push_chars(out, trail);
                return;
            }
        }
    }
    let (lead, core, trail) = split_punct(chunk);
    push_chars(out, lead);
    if !core.is_empty() {
        out.push(Token::from_trusted(core));
    }
    push_chars(out, trail);
}

/// Tokenizes a single message (no `<eos>` handling). Returns `None` when the
/// message is a retweet that the config asks to drop.
pub fn tokenize_message(line: &str, config: &CorpusConfig) -> Option<Vec<Token>> {
    let text = if config.lowercase {
        line.to_lowercase()
    } else {
        line.to_owned()
    };
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        tokenize_chunk(chunk, config, &mut out);
    }
    if config.drop_retweets && out.first().is_some_and(|t| t.as_str().eq_ignore_ascii_case("rt")) {
        return None;
    }
    Some(out)
}

/// Tokenizes raw text with one message per line. Messages are joined with
/// `<eos>`; empty lines and dropped retweets contribute nothing.
pub fn tokenize(raw_text: &str, config: &CorpusConfig) -> Vec<Token> {
    let mut out = Vec::new();
    for line in raw_text.lines() {
        let Some(msg) = tokenize_message(line, config) else {
            continue;
        };
        if msg.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(Token::from_trusted(EOS));
        }
        out.extend(msg);
    }
    out
}

/// SHA-256 over the ordered token surfaces. Keys and models record it so they
/// can refuse to run against a different index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VocabHash(pub [u8; 32]);

impl VocabHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s.trim()).ok()?;
        Some(VocabHash(bytes.try_into().ok()?))
    }
}

impl fmt::Display for VocabHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Ordered token list with occurrence counts.
///
/// Order is descending count with ties broken by byte-wise comparison of the
/// surface string, so the same corpus always yields the same indices.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    eos: u32,
    unk: u32,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.counts == other.counts
    }
}

impl Vocabulary {
    /// Builds a vocabulary from `(token, count)` pairs, sorting them into the
    /// canonical order. Reserved tokens are added with count 0 when missing.
    pub fn from_counts(pairs: impl IntoIterator<Item = (Token, u64)>) -> Result<Self, CorpusError> {
        let mut merged: HashMap<Token, u64> = HashMap::new();
        for (t, c) in pairs {
            *merged.entry(t).or_default() += c;
        }
        for s in [EOS, UNK] {
            merged.entry(Token::from_trusted(s)).or_default();
        }
        let mut entries: Vec<(Token, u64)> = merged.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_sorted(entries)
    }

    fn from_sorted(entries: Vec<(Token, u64)>) -> Result<Self, CorpusError> {
        let regular = entries.iter().filter(|(t, _)| !t.is_reserved()).count();
        if regular < 2 {
            return Err(CorpusError::TooSmall(regular));
        }
        let (tokens, counts): (Vec<Token>, Vec<u64>) = entries.into_iter().unzip();
        let index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.0.clone(), i as u32))
            .collect();
        let eos = index[EOS];
        let unk = index[UNK];
        Ok(Vocabulary {
            tokens,
            counts,
            index,
            eos,
            unk,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn token(&self, index: u32) -> Option<&Token> {
        self.tokens.get(index as usize)
    }

    pub fn count(&self, index: u32) -> Option<u64> {
        self.counts.get(index as usize).copied()
    }

    pub fn index_of(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    pub fn is_reserved(&self, index: u32) -> bool {
        index == self.eos || index == self.unk
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Maps tokens to indices, sending unknown surfaces to `<unk>`.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.index_of(t.as_ref()).unwrap_or(self.unk))
            .collect()
    }

    pub fn hash(&self) -> VocabHash {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_str().as_bytes());
            h.update(b"\n");
        }
        VocabHash(h.finalize().into())
    }

    /// Serializes to the `STEGOVOCAB v1` line format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::with_capacity(self.len() * 12);
        s.push_str(VOCAB_HEADER);
        s.push('\n');
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            s.push_str(t.as_str());
            s.push('\t');
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let malformed = |line: usize, reason: &str| CorpusError::Malformed {
            line,
            reason: reason.to_owned(),
        };
        let mut lines = text.lines();
        if lines.next() != Some(VOCAB_HEADER) {
            return Err(malformed(1, "missing STEGOVOCAB v1 header"));
        }
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| malformed(lineno, "expected token<TAB>count"))?;
            let tok = Token::new(tok).map_err(|e| malformed(lineno, &e.to_string()))?;
            let count: u64 = count
                .parse()
                .map_err(|_| malformed(lineno, "count is not an integer"))?;
            if !seen.insert(tok.clone()) {
                return Err(malformed(lineno, "duplicate token"));
            }
            entries.push((tok, count));
        }
        for s in [EOS, UNK] {
            if !seen.contains(&Token::from_trusted(s)) {
                return Err(malformed(0, &format!("reserved token {s} missing")));
            }
        }
        let ordered = entries
            .windows(2)
            .all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        if !ordered {
            return Err(malformed(
                0,
                "entries are not in canonical (count desc, surface asc) order",
            ));
        }
        Self::from_sorted(entries)
    }
}

/// Counts `tokens` and keeps those with at least `min_count` occurrences,
/// truncated to `max_vocab` entries. Occurrences of dropped tokens are folded
/// into `<unk>`, so counts always sum to the stream length.
pub fn build_vocab(tokens: &[Token], config: &CorpusConfig) -> Result<Vocabulary, CorpusError> {
    if tokens.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if let Some(m) = config.max_vocab {
        if m < 4 {
            return Err(CorpusError::MaxVocabTooSmall(m));
        }
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let eos_count = counts.remove(EOS).unwrap_or(0);
    let mut unk_count = counts.remove(UNK).unwrap_or(0);

    let mut regular: Vec<(&str, u64)> = counts.into_iter().collect();
    regular.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = config.max_vocab.map(|m| m - 2).unwrap_or(usize::MAX);
    let mut kept = Vec::new();
    for (surface, c) in regular {
        if c >= config.min_count && kept.len() < keep {
            kept.push((Token::from_trusted(surface), c));
        } else {
            unk_count += c;
        }
    }
    kept.push((Token::from_trusted(EOS), eos_count));
    kept.push((Token::from_trusted(UNK), unk_count));
    Vocabulary::from_counts(kept)
}

/// The `k` most frequent tokens in canonical order (reserved tokens included).
pub fn top_k_tokens(vocab: &Vocabulary, k: usize) -> Result<Vec<u32>, CorpusError> {
    if k > vocab.len() {
        return Err(CorpusError::TopKTooLarge { k, size: vocab.len() });
    }
    Ok((0..k as u32).collect())
}
