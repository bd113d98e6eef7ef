// Model files are line-oriented UTF-8. See docs/formats.md for the layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::lstm::{LstmHyperparams, LstmModel};
use super::ngram::{ContextCounts, NgramConfig, NgramModel};
use super::{check_vocab, LanguageModel, LmError, Model};
use crate::corpus::{VocabHash, Vocabulary};

const HEADER: &str = "STEGOLM v1";

impl Model {
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "backend: {}", self.backend_name()).unwrap();
        writeln!(s, "vocab_hash: {}", self.vocab_hash()).unwrap();
        writeln!(s, "vocab_size: {}", self.vocab_size()).unwrap();
        writeln!(s, "eos: {}", self.eos()).unwrap();
        match self {
            Model::Ngram(m) => {
                let cfg = m.config();
                writeln!(s, "order: {}", cfg.order).unwrap();
                writeln!(s, "k: {:e}", cfg.k).unwrap();
                let entries: usize = m.tables.iter().flat_map(|t| t.values()).map(|c| c.next.len()).sum();
                writeln!(s, "entries: {entries}").unwrap();
                for (order, table) in m.tables.iter().enumerate() {
                    for (ctx, counts) in table {
                        for (next, n) in &counts.next {
                            let ctx: Vec<String> = ctx.iter().map(u32::to_string).collect();
                            writeln!(s, "{}\t{}\t{next}\t{n}", order + 1, ctx.join(" ")).unwrap();
                        }
                    }
                }
            }
            Model::Lstm(m) => {
                let hp = m.hyperparams();
                writeln!(s, "layers: {}", hp.layers).unwrap();
                writeln!(s, "units: {}", hp.units).unwrap();
                writeln!(s, "embed_dim: {}", hp.embed_dim).unwrap();
                writeln!(s, "unroll_steps: {}", hp.unroll_steps).unwrap();
                writeln!(s, "batch_size: {}", hp.batch_size).unwrap();
                writeln!(s, "lr_init: {:e}", hp.lr_init).unwrap();
                writeln!(s, "lr_decay: {:e}", hp.lr_decay).unwrap();
                match hp.clip_norm {
                    Some(c) => writeln!(s, "clip_norm: {c:e}").unwrap(),
                    None => writeln!(s, "clip_norm: none").unwrap(),
                }
                writeln!(s, "dropout: {:e}", hp.dropout).unwrap();
                writeln!(s, "params: {}", m.param_count()).unwrap();
                for p in m.params() {
                    // `{:e}` prints the shortest string that parses back to the same bits
                    writeln!(s, "{p:e}").unwrap();
                }
            }
        }
        s
    }

    /// Parses a model file without checking it against a vocabulary.
    pub fn parse(text: &str) -> Result<Model, LmError> {
        let mut r = Reader {
            lines: text.lines().enumerate(),
            last: 0,
        };
        if r.next_line()? != HEADER {
            return Err(r.err("missing STEGOLM v1 header"));
        }
        let backend = r.field("backend")?;
        let hash = r.field("vocab_hash")?;
        let hash = VocabHash::from_hex(&hash).ok_or_else(|| r.err("vocab_hash is not 64 hex digits"))?;
        let vocab_size: usize = r.parsed("vocab_size")?;
        let eos: u32 = r.parsed("eos")?;
        if eos as usize >= vocab_size {
            return Err(r.err("eos index outside the vocabulary"));
        }
        match backend.as_str() {
            "ngram" => {
                let config = NgramConfig {
                    order: r.parsed("order")?,
                    k: r.parsed("k")?,
                };
                config.validate()?;
                let entries: usize = r.parsed("entries")?;
                let mut tables = vec![BTreeMap::<Vec<u32>, ContextCounts>::new(); config.order];
                for _ in 0..entries {
                    let line = r.next_line()?;
                    let mut cols = line.split('\t');
                    let (Some(order), Some(ctx), Some(next), Some(n), None) =
                        (cols.next(), cols.next(), cols.next(), cols.next(), cols.next())
                    else {
                        return Err(r.err("expected order<TAB>context<TAB>next<TAB>count"));
                    };
                    let order: usize = order.parse().map_err(|_| r.err("bad order"))?;
                    let ctx: Vec<u32> = ctx
                        .split(' ')
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(|_| r.err("bad context index"))?;
                    let next: u32 = next.parse().map_err(|_| r.err("bad token index"))?;
                    let n: u64 = n.parse().map_err(|_| r.err("bad count"))?;
                    if order == 0 || order > config.order || ctx.len() != order - 1 {
                        return Err(r.err("n-gram length does not match its order"));
                    }
                    if next as usize >= vocab_size || ctx.iter().any(|&c| c as usize >= vocab_size) {
                        return Err(r.err("token index outside the vocabulary"));
                    }
                    let entry = tables[order - 1].entry(ctx).or_default();
                    entry.total += n;
                    if entry.next.insert(next, n).is_some() {
                        return Err(r.err("duplicate n-gram"));
                    }
                }
                r.expect_end()?;
                Ok(Model::Ngram(NgramModel::from_parts(
                    config, vocab_size, hash, eos, tables,
                )))
            }
            "lstm" => {
                let hp = LstmHyperparams {
                    layers: r.parsed("layers")?,
                    units: r.parsed("units")?,
                    embed_dim: r.parsed("embed_dim")?,
                    unroll_steps: r.parsed("unroll_steps")?,
                    batch_size: r.parsed("batch_size")?,
                    lr_init: r.parsed("lr_init")?,
                    lr_decay: r.parsed("lr_decay")?,
                    clip_norm: match r.field("clip_norm")?.as_str() {
                        "none" => None,
                        v => Some(v.parse().map_err(|_| r.err("bad clip_norm"))?),
                    },
                    dropout: r.parsed("dropout")?,
                };
                let count: usize = r.parsed("params")?;
                let mut params = Vec::with_capacity(count);
                for _ in 0..count {
                    let line = r.next_line()?;
                    let p: f64 = line.trim().parse().map_err(|_| r.err("bad parameter value"))?;
                    if !p.is_finite() {
                        return Err(r.err("non-finite parameter"));
                    }
                    params.push(p);
                }
                r.expect_end()?;
                Ok(Model::Lstm(LstmModel::from_parts(hp, vocab_size, hash, eos, params)?))
            }
            other => Err(r.err(&format!("unknown backend {other:?}"))),
        }
    }
}

struct Reader<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: I,
    last: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Reader<'a, I> {
    fn err(&self, reason: &str) -> LmError {
        LmError::Malformed {
            line: self.last,
            reason: reason.to_owned(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str, LmError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => {
                self.last += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn field(&mut self, name: &str) -> Result<String, LmError> {
        let line = self.next_line()?;
        line.strip_prefix(name)
            .and_then(|r| r.strip_prefix(": "))
            .map(str::to_owned)
            .ok_or_else(|| self.err(&format!("expected `{name}: ...`")))
    }

    fn parsed<T: std::str::FromStr>(&mut self, name: &str) -> Result<T, LmError> {
        let v = self.field(name)?;
        v.parse().map_err(|_| self.err(&format!("bad value for {name}")))
    }

    fn expect_end(&mut self) -> Result<(), LmError> {
        match self.lines.next() {
            None => Ok(()),
            Some((i, l)) if l.is_empty() && self.lines.next().is_none() => {
                self.last = i + 1;
                Ok(())
            }
            Some((i, _)) => {
                self.last = i + 1;
                Err(self.err("trailing data"))
            }
        }
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), LmError> {
    let path = path.as_ref();
    std::fs::write(path, model.to_file_string()).map_err(|source| LmError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Loads a model and checks that it was built for `vocab`.
pub fn load_model(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Model, LmError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LmError::Io {
        path: path.to_owned(),
        source,
    })?;
    let model = Model::parse(&text)?;
    check_vocab(&model, vocab)?;
    Ok(model)
}
