mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{flat_vocab, FixedModel};
use steglm::codec::{self, constrained_select, Bits, Framing, GenPolicy, Payload};
use steglm::corpus::{self, CorpusConfig, Vocabulary};
use steglm::keying::{BinOf, BitBlock, StegoKey};
use steglm::lm::{train_ngram, NgramConfig};

const EXAMPLE_BINS: [(&str, &[&str]); 4] = [
    ("00", &["this", "am", "weather"]),
    ("01", &["was", "attaching", "today"]),
    ("10", &["i", "better", "an", "great!"]),
    ("11", &["great", "than", "nda", "."]),
];

/// The example key in lowercase form. "Great" and "great" collide after
/// lowercasing, so the capitalized one is stood in for by "great!".
fn example_key() -> (Arc<Vocabulary>, StegoKey) {
    let words: Vec<&str> = EXAMPLE_BINS.iter().flat_map(|(_, w)| w.iter().copied()).collect();
    let vocab = flat_vocab(&words);
    let bins = EXAMPLE_BINS
        .iter()
        .map(|(_, w)| w.iter().map(|t| vocab.index_of(t).unwrap()).collect())
        .collect();
    let key = StegoKey::from_parts(vocab.clone(), 2, bins, vec![], 0).unwrap();
    (vocab, key)
}

#[test]
fn example_key_lookup() {
    let (vocab, key) = example_key();
    let attaching = vocab.index_of("attaching").unwrap();
    assert_eq!(
        key.bin_of_token(attaching).unwrap(),
        BinOf::Block(BitBlock::parse("01").unwrap())
    );
    for (label, words) in EXAMPLE_BINS {
        let bin = key.bin(BitBlock::parse(label).unwrap());
        for w in words {
            assert!(bin.contains(&vocab.index_of(w).unwrap()));
        }
    }
}

#[test]
fn greedy_uniform_takes_first_token_of_the_bin() {
    let (vocab, key) = example_key();
    let model = FixedModel::uniform(&vocab);
    let block = BitBlock::parse("01").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = constrained_select(&model, &(), &key, block, &GenPolicy::greedy(), &mut rng).unwrap();
    // equal counts put carriers in lexicographic order
    let mut bin01 = ["was", "attaching", "today"];
    bin01.sort();
    assert_eq!(vocab.token(t).unwrap().as_str(), bin01[0]);
}

#[test]
fn greedy_takes_the_bin_argmax() {
    let (vocab, key) = example_key();
    let mut probs = vec![0.01; vocab.len()];
    probs[vocab.index_of("am").unwrap() as usize] = 0.2;
    // a more likely token in another bin must not win
    probs[vocab.index_of("nda").unwrap() as usize] = 0.5;
    let model = FixedModel::new(&vocab, probs);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = constrained_select(
        &model,
        &(),
        &key,
        BitBlock::parse("00").unwrap(),
        &GenPolicy::greedy(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(vocab.token(t).unwrap().as_str(), "am");
}

#[test]
fn steered_model_reproduces_the_example_sentence() {
    let (vocab, key) = example_key();
    let cfg = CorpusConfig::default();
    let toks = corpus::tokenize(&"i am attaching an nda .\n".repeat(5), &cfg);
    let model = train_ngram(&vocab.encode(&toks), &vocab, NgramConfig { order: 2, k: 0.01 }).unwrap();
    let payload = Payload::raw(Bits::parse("1000011011").unwrap());
    let st = codec::encode(&payload, &key, &model, &GenPolicy::greedy()).unwrap();
    assert_eq!(st.surfaces(&vocab), ["i", "am", "attaching", "an", "nda"]);
    assert_eq!(
        codec::render(&st.surfaces(&vocab), &Default::default()),
        "i am attaching an nda"
    );
}

#[test]
fn decode_worked_example() {
    let (_, key) = example_key();
    let bits = codec::decode(&["i", "am", "attaching", "an", "nda"], &key, Framing::Raw).unwrap();
    assert_eq!(bits.to_string(), "1000011011");
}

#[test]
fn block_splitting_examples() {
    let show =
        |p: &Payload, b: u32| -> Vec<String> { p.to_bit_blocks(b).unwrap().iter().map(ToString::to_string).collect() };
    assert_eq!(
        show(&Payload::raw(Bits::parse("100001").unwrap()), 2),
        ["10", "00", "01"]
    );
    assert_eq!(show(&Payload::raw(Bits::parse("10000").unwrap()), 2), ["10", "00"]);
    assert_eq!(show(&Payload::from_bytes(&[0xA5], Framing::Raw), 4), ["1010", "0101"]);
    // 32-bit header (value 8) then the byte, padded to 42 bits for |B|=3
    let framed = show(&Payload::from_bytes(&[0xA5], Framing::LengthPrefixed), 3);
    assert_eq!(framed.len(), 14);
    assert_eq!(framed.concat(), format!("{:032b}{:08b}00", 8, 0xA5));
}

#[test]
fn greedy_is_deterministic_and_decoding_is_model_independent() {
    let (vocab, key) = example_key();
    let cfg = CorpusConfig::default();
    let a = corpus::tokenize("this was great . i am better than today", &cfg);
    let b = corpus::tokenize("the weather today was great ! an nda", &cfg);
    let m1 = train_ngram(&vocab.encode(&a), &vocab, NgramConfig::default()).unwrap();
    let m2 = train_ngram(&vocab.encode(&b), &vocab, NgramConfig { order: 2, k: 1.0 }).unwrap();
    let payload = Payload::from_bytes(b"key", Framing::LengthPrefixed);
    let s1 = codec::encode(&payload, &key, &m1, &GenPolicy::greedy()).unwrap();
    assert_eq!(s1, codec::encode(&payload, &key, &m1, &GenPolicy::greedy()).unwrap());
    let s2 = codec::encode(&payload, &key, &m2, &GenPolicy::sample(1.0, 4)).unwrap();
    let d1 = codec::decode_indices(&s1.tokens, &key, Framing::LengthPrefixed).unwrap();
    let d2 = codec::decode_indices(&s2.tokens, &key, Framing::LengthPrefixed).unwrap();
    assert_eq!(d1, d2);
    assert_eq!(d1.to_bytes().unwrap(), b"key");
}
