//! Truncated-BPTT SGD training for [`LstmModel`].
//!
//! The training stream is cut into `batch_size` contiguous columns which are
//! walked in lockstep, `unroll_steps` tokens at a time, carrying the hidden
//! state across segments. Each column's segment gradient is computed
//! independently (in parallel when enabled) and summed in column order, so a
//! fixed seed reproduces the same parameters bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{LstmHyperparams, LstmModel, LstmState};
use super::LmError;
use crate::corpus::Vocabulary;
use crate::exec::Exec;

/// Minimum improvement of the validation loss that counts as progress.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub exec: Exec,
    /// Tail fraction of the stream held out for validation.
    pub valid_fraction: f64,
    pub verbose: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 5,
            seed: 0,
            exec: Exec::default(),
            valid_fraction: 0.1,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean training cross-entropy (nats/token); `None` for epoch 0.
    pub train_ce: Option<f64>,
    pub valid_ce: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Whether the learning rate was divided after this epoch.
    pub lr_decayed: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedLstm {
    pub model: LstmModel,
    pub history: Vec<EpochRecord>,
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 finalizer folded over the parts
    let mut z: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Mean cross-entropy of `stream` under `model`, evaluated as up to
/// `columns` independent contiguous chunks, each starting from a zero state.
pub fn stream_cross_entropy(model: &LstmModel, stream: &[u32], columns: usize, exec: Exec) -> f64 {
    let columns = columns.min(stream.len() / 2).max(1);
    let col_len = stream.len() / columns;
    let parts = exec.map_range(columns, |b| {
        let col = &stream[b * col_len..(b + 1) * col_len];
        model
            .segment_loss(&col[..col_len - 1], &col[1..], &model.zero_state())
            .0
    });
    parts.iter().sum::<f64>() / (columns * (col_len - 1)) as f64
}

/// Sums per-column segment gradients; returns the summed loss and gradient
/// plus each column's final state.
pub fn batch_gradient(
    model: &LstmModel,
    columns: &[&[u32]],
    offset: usize,
    steps: usize,
    states: &[LstmState],
    dropout_seed: Option<u64>,
    exec: Exec,
) -> (f64, Vec<f64>, Vec<LstmState>) {
    let results = exec.map_range(columns.len(), |b| {
        let col = columns[b];
        let inputs = &col[offset..offset + steps];
        let targets = &col[offset + 1..offset + steps + 1];
        match dropout_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, b as u64]));
                model.segment_grad(inputs, targets, &states[b], Some(&mut rng))
            }
            None => model.segment_grad::<ChaCha8Rng>(inputs, targets, &states[b], None),
        }
    });
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    let mut finals = Vec::with_capacity(results.len());
    for r in results {
        loss += r.loss;
        for (g, d) in grad.iter_mut().zip(&r.grad) {
            *g += d;
        }
        finals.push(r.final_state);
    }
    (loss, grad, finals)
}

/// Rescales `grad` so its L2 norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// `θ ← θ − lr·g`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Trains a fresh model on `stream` (vocabulary indices).
///
/// After every epoch the learning rate is divided by `lr_decay` unless the
/// validation loss improved on the best so far by more than
/// [`IMPROVEMENT_TOLERANCE`].
pub fn train_lstm(
    stream: &[u32],
    vocab: &Vocabulary,
    hp: LstmHyperparams,
    opts: &TrainOptions,
) -> Result<TrainedLstm, LmError> {
    hp.validate()?;
    let need = hp.unroll_steps * hp.batch_size;
    if stream.len() < need {
        return Err(LmError::CorpusTooSmall {
            need,
            have: stream.len(),
        });
    }
    if !(0.0..1.0).contains(&opts.valid_fraction) || opts.valid_fraction == 0.0 {
        return Err(LmError::InvalidHyperparams("valid_fraction must be in (0, 1)".into()));
    }
    for &t in stream {
        super::check_index(t, vocab.len())?;
    }
    let split = ((1.0 - opts.valid_fraction) * stream.len() as f64).round() as usize;
    let (train, valid) = stream.split_at(split);
    let col_len = train.len() / hp.batch_size;
    if col_len < 2 || valid.len() < 2 {
        return Err(LmError::CorpusTooSmall {
            need: need.max(2 * hp.batch_size + 2),
            have: stream.len(),
        });
    }
    let columns: Vec<&[u32]> = (0..hp.batch_size)
        .map(|b| &train[b * col_len..(b + 1) * col_len])
        .collect();

    let mut model = LstmModel::new(vocab, hp, &mut ChaCha8Rng::seed_from_u64(opts.seed))?;
    let mut history = Vec::with_capacity(opts.epochs + 1);
    let valid0 = stream_cross_entropy(&model, valid, hp.batch_size, opts.exec);
    history.push(EpochRecord {
        epoch: 0,
        train_ce: None,
        valid_ce: valid0,
        lr: hp.lr_init,
        lr_decayed: false,
    });
    if opts.verbose {
        eprintln!("epoch 0: valid ce {valid0:.4}");
    }
    let mut best = valid0;
    let mut lr = hp.lr_init;

    for epoch in 1..=opts.epochs {
        let mut states = vec![model.zero_state(); hp.batch_size];
        let mut total_loss = 0.0;
        let mut total_tokens = 0usize;
        for (step, offset) in (0..col_len - 1).step_by(hp.unroll_steps).enumerate() {
            let steps = hp.unroll_steps.min(col_len - 1 - offset);
            let dropout_seed = (hp.dropout > 0.0).then(|| mix_seed(&[opts.seed, epoch as u64, step as u64]));
            let (loss, mut grad, finals) =
                batch_gradient(&model, &columns, offset, steps, &states, dropout_seed, opts.exec);
            let n = (hp.batch_size * steps) as f64;
            let mean = loss / n;
            if !mean.is_finite() {
                return Err(LmError::Diverged {
                    epoch,
                    step,
                    loss: mean,
                });
            }
            grad.iter_mut().for_each(|g| *g /= n);
            if let Some(c) = hp.clip_norm {
                clip_global_norm(&mut grad, c);
            }
            sgd_step(model.params_mut(), &grad, lr);
            states = finals;
            total_loss += loss;
            total_tokens += hp.batch_size * steps;
        }
        let train_ce = total_loss / total_tokens as f64;
        let valid_ce = stream_cross_entropy(&model, valid, hp.batch_size, opts.exec);
        let decayed = valid_ce >= best - IMPROVEMENT_TOLERANCE;
        if opts.verbose {
            eprintln!("epoch {epoch}: lr {lr} train ce {train_ce:.4} valid ce {valid_ce:.4}");
        }
        history.push(EpochRecord {
            epoch,
            train_ce: Some(train_ce),
            valid_ce,
            lr,
            lr_decayed: decayed,
        });
        if decayed {
            lr /= hp.lr_decay;
        } else {
            best = valid_ce;
        }
    }
    Ok(TrainedLstm { model, history })
}
