//! The `steglm` command line.
//!
//! Every failure ends in a single stderr line `error[<class>]: <message>` and
//! a nonzero exit code. Payload bytes and reports go to stdout (or `--out`),
//! so commands can be piped.

use std::ffi::OsString;
use std::fmt;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{self, Bits, CodecError, Framing, GenPolicy, Payload, RenderOptions, SelectMode};
use crate::corpus::{self, CorpusConfig, CorpusError, Token, Vocabulary, EOS};
use crate::exec::Exec;
use crate::keying::{KeyError, KeySpec, StegoKey};
use crate::lm::{self, LanguageModel, LmError, LstmHyperparams, Model, NgramConfig, TrainOptions};
use crate::metrics::{self, MetricsError};

#[derive(Debug, Parser)]
#[command(
    name = "steglm",
    version,
    about = "Hide bit strings in language-model-generated text"
)]
struct Cli {
    /// Run data-parallel loops on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize a corpus (one message per line) and build its vocabulary.
    Prep(PrepArgs),
    /// Train a language model on a token file.
    Train(TrainArgs),
    /// Generate a key that partitions the vocabulary into bins.
    Keygen(KeygenArgs),
    /// Hide a payload in generated text.
    Encode(EncodeArgs),
    /// Recover a payload from tokens or rendered text. Needs no model.
    Decode(DecodeArgs),
    /// Perplexity, stego perplexity and capacity.
    Eval(EvalArgs),
    /// Encode/decode self-test over random payloads and keys.
    Roundtrip(RoundtripArgs),
}

#[derive(Debug, Args)]
struct PrepArgs {
    #[arg(long)]
    input: PathBuf,
    /// Where to write the vocabulary file.
    #[arg(long)]
    vocab: PathBuf,
    /// Where to write the token stream, one token per line.
    #[arg(long)]
    tokens: PathBuf,
    /// Vocabulary size including `<eos>` and `<unk>`.
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    #[arg(long)]
    keep_case: bool,
    /// Keep @mentions and links instead of mapping them to `<user>`/`<url>`.
    #[arg(long)]
    keep_users_urls: bool,
    #[arg(long)]
    drop_retweets: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Backend {
    Ngram,
    Lstm,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ngram")]
    backend: Backend,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// n-gram order.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Add-k smoothing constant.
    #[arg(long, default_value_t = 0.1)]
    k: f64,
    /// LSTM preset: desk, twitter or enron.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    unroll: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct KeygenArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Bits per block; the key has 2^block_bits bins.
    #[arg(long)]
    block_bits: u32,
    /// Number of most frequent tokens shared by every bin.
    #[arg(long, default_value_t = 0)]
    common: usize,
    #[arg(long)]
    seed: u64,
    /// Make `<eos>` a common token so messages can span lines.
    #[arg(long)]
    eos_common: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FramingArg {
    Raw,
    Length,
}

impl From<FramingArg> for Framing {
    fn from(f: FramingArg) -> Self {
        match f {
            FramingArg::Raw => Framing::Raw,
            FramingArg::Length => Framing::LengthPrefixed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Payload file; `-` reads stdin.
    #[arg(long, conflicts_with = "bits")]
    input: Option<PathBuf>,
    /// Payload given as a string of 0s and 1s.
    #[arg(long)]
    bits: Option<String>,
    #[arg(long, value_enum, default_value = "sample")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "length")]
    framing: FramingArg,
    #[arg(long, default_value_t = 5)]
    max_common_run: usize,
    /// Rendered stegotext destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the token sequence, one token per line.
    #[arg(long)]
    emit_tokens: Option<PathBuf>,
    #[arg(long)]
    capitalize: bool,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    key: PathBuf,
    /// Token file written by `encode --emit-tokens`.
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    tokens: Option<PathBuf>,
    /// Rendered stegotext; re-tokenized before decoding.
    #[arg(long)]
    text: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "length")]
    framing: FramingArg,
    /// Print the recovered bits as 0/1 text instead of bytes.
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    key: Option<PathBuf>,
    /// Evaluation token stream.
    #[arg(long)]
    tokens: Option<PathBuf>,
    #[arg(long)]
    ppl: bool,
    #[arg(long)]
    stego_ppl: bool,
    #[arg(long)]
    capacity: bool,
    /// Block width for `--capacity` when no key is given.
    #[arg(long)]
    block_bits: Option<u32>,
    /// Fraction of common tokens for `--capacity`; measured from `--tokens` when a key is given.
    #[arg(long)]
    common_fraction: Option<f64>,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RoundtripArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Longest random payload in bytes.
    #[arg(long, default_value_t = 64)]
    max_bytes: usize,
    /// Use this vocabulary and model instead of the built-in toy model.
    #[arg(long, requires = "model")]
    vocab: Option<PathBuf>,
    #[arg(long, requires = "vocab")]
    model: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Corpus(CorpusError),
    Lm(LmError),
    Key(KeyError),
    Codec(CodecError),
    Metrics(MetricsError),
    Roundtrip { failed: usize, trials: usize },
}

impl CliError {
    /// Stable machine-readable class.
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(..) => "io",
            CliError::Lm(LmError::VocabMismatch { .. })
            | CliError::Key(KeyError::HashMismatch { .. })
            | CliError::Codec(CodecError::ModelKeyMismatch { .. }) => "mismatch",
            CliError::Corpus(_) => "corpus",
            CliError::Lm(_) => "model",
            CliError::Key(_) => "key",
            CliError::Codec(_) => "codec",
            CliError::Metrics(_) => "metrics",
            CliError::Roundtrip { .. } => "roundtrip",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Corpus(e) => write!(f, "{e}"),
            CliError::Lm(e) => write!(f, "{e}"),
            CliError::Key(e) => write!(f, "{e}"),
            CliError::Codec(e) => write!(f, "{e}"),
            CliError::Metrics(e) => write!(f, "{e}"),
            CliError::Roundtrip { failed, trials } => write!(f, "{failed} of {trials} trials failed"),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Corpus(e)
    }
}
impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        CliError::Lm(e)
    }
}
impl From<KeyError> for CliError {
    fn from(e: KeyError) -> Self {
        CliError::Key(e)
    }
}
impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Metrics(e)
    }
}
impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Key(k) => CliError::Key(k),
            CodecError::Lm(l) => CliError::Lm(l),
            e => CliError::Codec(e),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let line: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error[usage]: {}", line.join(" ").trim_start_matches("error: "));
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), e.to_string().replace('\n', " "));
            if matches!(e, CliError::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.command {
        Command::Prep(a) => prep(a),
        Command::Train(a) => train(a, exec),
        Command::Keygen(a) => keygen(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a, exec),
        Command::Roundtrip(a) => roundtrip(a, exec),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_owned(), e))
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    std::fs::write(path, data).map_err(|e| CliError::Io(path.to_owned(), e))
}

fn emit(out: Option<&Path>, data: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, data),
        None => std::io::stdout()
            .write_all(data)
            .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e)),
    }
}

fn load_vocab(path: &Path) -> Result<Arc<Vocabulary>> {
    Ok(Arc::new(Vocabulary::parse(&read_text(path)?)?))
}

fn load_key(path: &Path, vocab: &Arc<Vocabulary>) -> Result<StegoKey> {
    Ok(StegoKey::parse(&read_text(path)?, vocab)?)
}

/// Token files hold one token per line; blank lines are ignored.
fn read_token_file(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn token_file_string<T: AsRef<str>>(tokens: &[T]) -> String {
    let mut s = String::new();
    for t in tokens {
        s.push_str(t.as_ref());
        s.push('\n');
    }
    s
}

fn prep(a: PrepArgs) -> Result<()> {
    let cfg = CorpusConfig {
        lowercase: !a.keep_case,
        replace_users_urls: !a.keep_users_urls,
        drop_retweets: a.drop_retweets,
        max_vocab: a.max_vocab,
        min_count: a.min_count,
    };
    let tokens = corpus::tokenize(&read_text(&a.input)?, &cfg);
    let vocab = corpus::build_vocab(&tokens, &cfg)?;
    write_file(&a.vocab, vocab.to_file_string().as_bytes())?;
    let surfaces: Vec<&str> = tokens
        .iter()
        .map(|t| match vocab.index_of(t.as_str()) {
            Some(_) => t.as_str(),
            None => corpus::UNK,
        })
        .collect();
    write_file(&a.tokens, token_file_string(&surfaces).as_bytes())?;
    eprintln!(
        "tokens: {}\nvocab_size: {}\nvocab_hash: {}",
        tokens.len(),
        vocab.len(),
        vocab.hash()
    );
    Ok(())
}

fn lstm_hyperparams(a: &TrainArgs) -> Result<LstmHyperparams> {
    let mut hp =
        LstmHyperparams::preset(&a.preset).ok_or_else(|| CliError::Usage(format!("unknown preset {:?}", a.preset)))?;
    if let Some(v) = a.layers {
        hp.layers = v;
    }
    if let Some(v) = a.units {
        hp.units = v;
    }
    if let Some(v) = a.embed_dim {
        hp.embed_dim = v;
    }
    if let Some(v) = a.unroll {
        hp.unroll_steps = v;
    }
    if let Some(v) = a.batch_size {
        hp.batch_size = v;
    }
    if let Some(v) = a.lr {
        hp.lr_init = v;
    }
    if let Some(v) = a.lr_decay {
        hp.lr_decay = v;
    }
    if let Some(v) = a.clip {
        hp.clip_norm = (v > 0.0).then_some(v);
    }
    if let Some(v) = a.dropout {
        hp.dropout = v;
    }
    Ok(hp)
}

fn train(a: TrainArgs, exec: Exec) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let stream = vocab.encode(&read_token_file(&a.tokens)?);
    let model = match a.backend {
        Backend::Ngram => Model::Ngram(lm::train_ngram(
            &stream,
            &vocab,
            NgramConfig { order: a.order, k: a.k },
        )?),
        Backend::Lstm => {
            let opts = TrainOptions {
                epochs: a.epochs,
                seed: a.seed,
                exec,
                verbose: a.verbose,
                ..Default::default()
            };
            let trained = lm::train_lstm(&stream, &vocab, lstm_hyperparams(&a)?, &opts)?;
            for r in trained.history.iter().filter(|_| !a.verbose) {
                eprintln!(
                    "epoch {}: valid_ce {:.4} lr {}{}",
                    r.epoch,
                    r.valid_ce,
                    r.lr,
                    if r.lr_decayed { " (decayed)" } else { "" }
                );
            }
            Model::Lstm(trained.model)
        }
    };
    lm::save_model(&model, &a.out)?;
    Ok(())
}

fn keygen(a: KeygenArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let spec = KeySpec {
        eos_common: a.eos_common,
        ..KeySpec::new(a.block_bits, a.common, a.seed)
    };
    let key = StegoKey::generate(&vocab, &spec)?;
    write_file(&a.out, key.to_file_string().as_bytes())
}

fn read_payload(a: &EncodeArgs) -> Result<Bits> {
    if let Some(b) = &a.bits {
        return Bits::parse(b.trim()).ok_or_else(|| CliError::Usage("--bits takes only 0 and 1".into()));
    }
    let bytes = match a.input.as_deref() {
        None => return Err(CliError::Usage("one of --input or --bits is required".into())),
        Some(p) if p == Path::new("-") => {
            let mut buf = Vec::new();
            std::io::stdin()
                .read_to_end(&mut buf)
                .map_err(|e| CliError::Io(PathBuf::from("<stdin>"), e))?;
            buf
        }
        Some(p) => std::fs::read(p).map_err(|e| CliError::Io(p.to_owned(), e))?,
    };
    Ok(Bits::from_bytes(&bytes))
}

fn encode(a: EncodeArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let key = load_key(&a.key, &vocab)?;
    let model = lm::load_model(&a.model, &vocab)?;
    let payload = Payload::new(read_payload(&a)?, a.framing.into());
    let policy = GenPolicy {
        mode: match a.mode {
            ModeArg::Greedy => SelectMode::Greedy,
            ModeArg::Sample => SelectMode::Sample,
        },
        temperature: a.temp,
        seed: a.seed,
        max_common_run: a.max_common_run,
    };
    let st = codec::encode(&payload, &key, &model, &policy)?;
    let surfaces = st.surfaces(&vocab);
    if let Some(p) = &a.emit_tokens {
        write_file(p, token_file_string(&surfaces).as_bytes())?;
    }
    let opts = RenderOptions {
        capitalize: a.capitalize,
        mock_seed: a.seed,
        ..Default::default()
    };
    let mut text = codec::render(&surfaces, &opts);
    text.push('\n');
    emit(a.out.as_deref(), text.as_bytes())?;
    eprintln!(
        "tokens: {}\ncarriers: {}\nbits: {}",
        st.tokens.len(),
        st.carrier_count,
        st.encoded_bits()
    );
    Ok(())
}

/// Best-effort inverse of rendering: each line is one message, lines are
/// joined with `<eos>`.
fn retokenize(text: &str) -> Vec<String> {
    let cfg = CorpusConfig {
        drop_retweets: false,
        ..Default::default()
    };
    let mut out = Vec::new();
    let lines: Vec<&str> = text.strip_suffix('\n').unwrap_or(text).split('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        if i > 0 {
            out.push(EOS.to_owned());
        }
        let toks = corpus::tokenize_message(line, &cfg).unwrap_or_default();
        out.extend(toks.into_iter().map(|t: Token| t.as_str().to_owned()));
    }
    out
}

fn decode(a: DecodeArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let key = load_key(&a.key, &vocab)?;
    let tokens = match (&a.tokens, &a.text) {
        (Some(p), _) => read_token_file(p)?,
        (None, Some(p)) => retokenize(&read_text(p)?),
        (None, None) => return Err(CliError::Usage("one of --tokens or --text is required".into())),
    };
    let bits = codec::decode(&tokens, &key, a.framing.into())?;
    if a.bits {
        return emit(a.out.as_deref(), format!("{bits}\n").as_bytes());
    }
    let whole = bits.len() / 8 * 8;
    if whole != bits.len() {
        eprintln!(
            "note: dropping {} trailing bits that do not fill a byte",
            bits.len() - whole
        );
    }
    let bytes = bits.prefix(whole).to_bytes().expect("whole bytes");
    emit(a.out.as_deref(), &bytes)
}

fn eval(a: EvalArgs, exec: Exec) -> Result<()> {
    if !(a.ppl || a.stego_ppl || a.capacity) {
        return Err(CliError::Usage(
            "pick at least one of --ppl, --stego-ppl, --capacity".into(),
        ));
    }
    let need = |o: &Option<PathBuf>, flag: &str, what: &str| -> Result<PathBuf> {
        o.clone().ok_or_else(|| CliError::Usage(format!("{what} needs {flag}")))
    };
    let mut report = String::new();
    let mut json = serde_json::Map::new();

    let vocab = a.vocab.as_deref().map(load_vocab).transpose()?;
    let key = match (&a.key, &vocab) {
        (Some(k), Some(v)) => Some(load_key(k, v)?),
        (Some(_), None) => return Err(CliError::Usage("--key needs --vocab".into())),
        _ => None,
    };
    let stream = match (&a.tokens, &vocab) {
        (Some(t), Some(v)) => Some(v.encode(&read_token_file(t)?)),
        (Some(_), None) => return Err(CliError::Usage("--tokens needs --vocab".into())),
        _ => None,
    };

    if a.ppl || a.stego_ppl {
        let v = vocab
            .as_ref()
            .ok_or_else(|| CliError::Usage("perplexity needs --vocab".into()))?;
        let model = lm::load_model(need(&a.model, "--model", "perplexity")?, v)?;
        let stream = stream
            .as_ref()
            .ok_or_else(|| CliError::Usage("perplexity needs --tokens".into()))?;
        if a.ppl {
            let r = metrics::perplexity(&model, stream, exec)?;
            report.push_str(&format!("ppl: {:.4}\n", r.perplexity));
            report.push_str(&prefixed("ppl", &r.to_kv()));
            json.insert("ppl".into(), serde_json::to_value(&r).expect("serializable"));
        }
        if a.stego_ppl {
            let key = key
                .as_ref()
                .ok_or_else(|| CliError::Usage("--stego-ppl needs --key".into()))?;
            if model.vocab_hash() != key.vocab_hash() {
                return Err(CliError::Key(KeyError::HashMismatch {
                    key: key.vocab_hash(),
                    vocab: model.vocab_hash(),
                }));
            }
            let r = metrics::stego_perplexity(&model, key, stream, exec)?;
            report.push_str(&format!("stego_ppl: {:.4}\n", r.perplexity));
            report.push_str(&prefixed("stego_ppl", &r.to_kv()));
            json.insert("stego_ppl".into(), serde_json::to_value(&r).expect("serializable"));
        }
    }

    if a.capacity {
        let block_bits = match (&key, a.block_bits) {
            (_, Some(b)) => b,
            (Some(k), None) => k.block_bits(),
            (None, None) => return Err(CliError::Usage("--capacity needs --block-bits or --key".into())),
        };
        let p = match (a.common_fraction, &key, &stream) {
            (Some(p), _, _) => p,
            (None, Some(k), Some(s)) => metrics::common_fraction(s, k),
            _ => 0.0,
        };
        let bpw = metrics::capacity(block_bits, p)?;
        report.push_str(&format!("capacity: {bpw:.3} bits/word\n"));
        report.push_str(&format!(
            "capacity.block_bits: {block_bits}\ncapacity.common_fraction: {p:.4}\n"
        ));
        json.insert(
            "capacity".into(),
            serde_json::json!({ "block_bits": block_bits, "common_fraction": p, "bits_per_word": bpw }),
        );
    }

    emit(None, report.as_bytes())?;
    if let Some(p) = &a.json {
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(json)).expect("serializable");
        write_file(p, text.as_bytes())?;
    }
    Ok(())
}

fn prefixed(prefix: &str, kv: &str) -> String {
    kv.lines().map(|l| format!("{prefix}.{l}\n")).collect()
}

const TOY_WORDS: [&str; 48] = [
    "the", "a", "i", "you", "we", "it", "is", "was", "to", "and", "of", "in", "on", "for", "my", "this", "that",
    "love", "hate", "need", "see", "go", "get", "want", "day", "night", "time", "home", "work", "game", "music",
    "coffee", "rain", "sun", "friend", "today", "tomorrow", "now", "so", "very", "good", "bad", "new", "lol", "!", ".",
    "?", ",",
];

/// A small seeded corpus with a skewed word distribution.
fn toy_corpus(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..600 {
        let len = rng.random_range(3..12);
        for i in 0..len {
            // squaring a uniform draw favours low indices
            let u: f64 = rng.random();
            let w = TOY_WORDS[((u * u) * TOY_WORDS.len() as f64) as usize];
            if i > 0 {
                text.push(' ');
            }
            text.push_str(w);
        }
        text.push('\n');
    }
    text
}

fn roundtrip(a: RoundtripArgs, exec: Exec) -> Result<()> {
    let (vocab, model) = match (&a.vocab, &a.model) {
        (Some(v), Some(m)) => {
            let vocab = load_vocab(v)?;
            let model = lm::load_model(m, &vocab)?;
            (vocab, model)
        }
        _ => {
            let cfg = CorpusConfig::default();
            let toks = corpus::tokenize(&toy_corpus(a.seed), &cfg);
            let vocab = Arc::new(corpus::build_vocab(&toks, &cfg)?);
            let model = Model::Ngram(lm::train_ngram(&vocab.encode(&toks), &vocab, NgramConfig::default())?);
            (vocab, model)
        }
    };
    let outcomes = exec.map_range(a.trials, |i| {
        roundtrip_trial(&vocab, &model, a.seed, i as u64, a.max_bytes)
    });
    let mut failed = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if let Err(msg) = o {
            failed += 1;
            eprintln!("trial {i}: {msg}");
        }
    }
    println!("roundtrip: {}/{} succeeded", a.trials - failed, a.trials);
    if failed > 0 {
        return Err(CliError::Roundtrip {
            failed,
            trials: a.trials,
        });
    }
    Ok(())
}

fn roundtrip_trial(
    vocab: &Arc<Vocabulary>,
    model: &Model,
    seed: u64,
    trial: u64,
    max_bytes: usize,
) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let block_bits = rng.random_range(1..=3);
    let common = if rng.random_bool(0.5) { 0 } else { 10 };
    let key = StegoKey::generate(vocab, &KeySpec::new(block_bits, common, rng.random()))
        .map_err(|e| format!("keygen: {e}"))?;
    let len = rng.random_range(1..=max_bytes.max(1));
    let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
    let framing = if rng.random_bool(0.5) {
        Framing::Raw
    } else {
        Framing::LengthPrefixed
    };
    let policy = if rng.random_bool(0.5) {
        GenPolicy::greedy()
    } else {
        GenPolicy::sample(rng.random_range(0.5..1.5), rng.random())
    };
    let payload = Payload::from_bytes(&bytes, framing);
    let st = codec::encode(&payload, &key, model, &policy).map_err(|e| format!("encode: {e}"))?;
    let got = codec::decode(&st.surfaces(vocab), &key, framing).map_err(|e| format!("decode: {e}"))?;
    let want = payload.recoverable(block_bits);
    if got != want {
        return Err(format!("decoded {} bits, expected {}", got.len(), want.len()));
    }
    Ok(())
}
