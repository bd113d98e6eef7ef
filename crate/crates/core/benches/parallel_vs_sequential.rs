use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use steglm::codec::{self, Framing, GenPolicy, Payload};
use steglm::corpus::{self, CorpusConfig, Vocabulary};
use steglm::keying::generate_key;
use steglm::lm::train::batch_gradient;
use steglm::lm::{train_ngram, LstmHyperparams, LstmModel, NgramConfig, NgramModel};
use steglm::{metrics, Exec};

const CORPUS: &str = include_str!("../../../data/desk_corpus.txt");

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn desk() -> (Arc<Vocabulary>, Vec<u32>) {
    let cfg = CorpusConfig::default();
    let tokens = corpus::tokenize(CORPUS, &cfg);
    let vocab = corpus::build_vocab(&tokens, &cfg).unwrap();
    let stream = vocab.encode(&tokens);
    (Arc::new(vocab), stream)
}

fn lstm_gradient(c: &mut Criterion) {
    let (vocab, stream) = desk();
    let hp = LstmHyperparams::desk();
    let model = LstmModel::new(&vocab, hp, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let width = stream.len() / hp.batch_size;
    let columns: Vec<&[u32]> = stream.chunks_exact(width).collect();
    let states = vec![model.zero_state(); columns.len()];
    let mut group = c.benchmark_group("lstm_batch_gradient");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| batch_gradient(&model, &columns, 0, hp.unroll_steps, &states, Some(3), exec))
        });
    }
    group.finish();
}

fn stego_perplexity(c: &mut Criterion) {
    let (vocab, stream) = desk();
    let model = train_ngram(&stream, &vocab, NgramConfig::default()).unwrap();
    let key = generate_key(&vocab, 2, 10, 4).unwrap();
    let valid = &stream[..20_000];
    let mut group = c.benchmark_group("stego_perplexity");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| metrics::stego_perplexity(&model, &key, black_box(valid), exec).unwrap())
        });
    }
    group.finish();
}

fn round_trips(model: &NgramModel, vocab: &Arc<Vocabulary>, trials: usize, exec: Exec) -> usize {
    exec.map_range(trials, |i| {
        let key = generate_key(vocab, 1 + (i % 3) as u32, 10, i as u64).unwrap();
        let bytes: Vec<u8> = (0..32).map(|j| (i * 31 + j * 7) as u8).collect();
        let payload = Payload::from_bytes(&bytes, Framing::LengthPrefixed);
        let st = codec::encode(&payload, &key, model, &GenPolicy::sample(1.0, i as u64)).unwrap();
        let back = codec::decode_indices(&st.tokens, &key, Framing::LengthPrefixed).unwrap();
        usize::from(back.to_bytes().as_deref() == Some(&bytes[..]))
    })
    .into_iter()
    .sum()
}

fn round_trip_trials(c: &mut Criterion) {
    let (vocab, stream) = desk();
    let model = train_ngram(&stream, &vocab, NgramConfig::default()).unwrap();
    let mut group = c.benchmark_group("round_trip_32_trials");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| assert_eq!(round_trips(&model, &vocab, 32, exec), 32))
        });
    }
    group.finish();
}

criterion_group!(benches, lstm_gradient, stego_perplexity, round_trip_trials);
criterion_main!(benches);
