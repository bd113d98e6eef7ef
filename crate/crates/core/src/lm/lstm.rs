//! Word-level multi-layer LSTM language model.
//!
//! Architecture: embedding → `layers` stacked LSTM cells → full softmax over
//! the vocabulary. Each cell uses the standard gate set
//!
//! ```text
//! i = σ(W_i·[x; h] + b_i)    f = σ(W_f·[x; h] + b_f)
//! g = tanh(W_g·[x; h] + b_g) o = σ(W_o·[x; h] + b_o)
//! c' = f∘c + i∘g             h' = o∘tanh(c')
//! ```
//!
//! All parameters live in one flat `Vec<f64>` so that clipping, the SGD update
//! and finite-difference checks can treat them uniformly. Dropout (inverted,
//! training only) is applied to the embedding output, between layers and
//! before the output projection; recurrent connections are never dropped.

use rand::Rng;

use super::{check_index, log_softmax, LanguageModel, LmError};
use crate::corpus::{VocabHash, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmHyperparams {
    pub layers: usize,
    pub units: usize,
    pub embed_dim: usize,
    pub unroll_steps: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    /// Divisor applied to the learning rate when validation loss stalls.
    pub lr_decay: f64,
    pub clip_norm: Option<f64>,
    pub dropout: f64,
}

impl LstmHyperparams {
    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        LstmHyperparams {
            layers: 1,
            units: 64,
            embed_dim: 32,
            unroll_steps: 20,
            batch_size: 20,
            lr_init: 1.0,
            lr_decay: 4.0,
            clip_norm: Some(5.0),
            dropout: 0.0,
        }
    }

    /// Two layers of 600 units, unrolled 25 steps, 20% dropout.
    pub fn twitter() -> Self {
        LstmHyperparams {
            layers: 2,
            units: 600,
            embed_dim: 200,
            unroll_steps: 25,
            batch_size: 20,
            lr_init: 20.0,
            lr_decay: 4.0,
            clip_norm: Some(0.25),
            dropout: 0.2,
        }
    }

    /// Three layers of 600 units, unrolled 20 steps, no dropout.
    pub fn enron() -> Self {
        LstmHyperparams {
            layers: 3,
            units: 600,
            embed_dim: 200,
            unroll_steps: 20,
            batch_size: 20,
            lr_init: 20.0,
            lr_decay: 4.0,
            clip_norm: Some(0.25),
            dropout: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "twitter" | "paper-twitter" => Some(Self::twitter()),
            "enron" | "paper-enron" => Some(Self::enron()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |m: &str| Err(LmError::InvalidHyperparams(m.to_owned()));
        if self.layers == 0 || self.units == 0 || self.embed_dim == 0 {
            return bad("layers, units and embed_dim must be positive");
        }
        if self.unroll_steps == 0 || self.batch_size == 0 {
            return bad("unroll_steps and batch_size must be positive");
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return bad("lr_init must be positive");
        }
        if !(self.lr_decay > 1.0 && self.lr_decay.is_finite()) {
            return bad("lr_decay must be greater than 1");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("clip_norm must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

/// Offsets of each parameter group inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub vocab: usize,
    pub embed: usize,
    pub units: usize,
    pub layer_w: Vec<usize>,
    pub layer_b: Vec<usize>,
    pub out_w: usize,
    pub out_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(vocab: usize, hp: &LstmHyperparams) -> Self {
        let (e, h) = (hp.embed_dim, hp.units);
        let mut off = vocab * e;
        let mut layer_w = Vec::with_capacity(hp.layers);
        let mut layer_b = Vec::with_capacity(hp.layers);
        for l in 0..hp.layers {
            let input = if l == 0 { e } else { h };
            layer_w.push(off);
            off += 4 * h * (input + h);
            layer_b.push(off);
            off += 4 * h;
        }
        let out_w = off;
        off += vocab * h;
        let out_b = off;
        off += vocab;
        Layout {
            vocab,
            embed: e,
            units: h,
            layer_w,
            layer_b,
            out_w,
            out_b,
            total: off,
        }
    }

    fn input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed
        } else {
            self.units
        }
    }
}

/// Per-layer hidden and cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(layers: usize, units: usize) -> Self {
        LstmState {
            h: vec![vec![0.0; units]; layers],
            c: vec![vec![0.0; units]; layers],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    hp: LstmHyperparams,
    vocab_hash: VocabHash,
    eos: u32,
    layout: Layout,
    params: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W·x` for a row-major `rows × x.len()` block starting at `w`.
#[inline]
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ·d` for a row-major `d.len() × out.len()` block.
#[inline]
fn matvec_t_acc(w: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += dr * a;
        }
    }
}

/// `g += d ⊗ x` for a row-major `d.len() × x.len()` block.
#[inline]
fn outer_acc(g: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gi, xi) in row.iter_mut().zip(x) {
            *gi += dr * xi;
        }
    }
}

struct CellCache {
    /// `[x; h_prev]`, with dropout already applied to `x`.
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates laid out `[i | f | g | o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Dropout multipliers applied to the layer input (empty when no dropout).
    in_mask: Vec<f64>,
}

struct StepCache {
    token: u32,
    target: u32,
    cells: Vec<CellCache>,
    /// Top hidden state after dropout, as fed to the output layer.
    top: Vec<f64>,
    top_mask: Vec<f64>,
    probs: Vec<f64>,
}

/// Loss and gradient for one unrolled segment of one batch column.
#[derive(Debug, Clone)]
pub struct SegmentGrad {
    /// Summed (not averaged) negative log-likelihood in nats.
    pub loss: f64,
    pub grad: Vec<f64>,
    pub final_state: LstmState,
}

fn dropout_mask<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

impl LstmModel {
    /// Parameters drawn uniformly from `[-0.1, 0.1]`.
    pub fn new<R: Rng>(vocab: &Vocabulary, hp: LstmHyperparams, rng: &mut R) -> Result<Self, LmError> {
        hp.validate()?;
        let layout = Layout::new(vocab.len(), &hp);
        let params = (0..layout.total).map(|_| rng.random_range(-0.1..=0.1)).collect();
        Ok(LstmModel {
            hp,
            vocab_hash: vocab.hash(),
            eos: vocab.eos(),
            layout,
            params,
        })
    }

    pub(crate) fn from_parts(
        hp: LstmHyperparams,
        vocab_size: usize,
        vocab_hash: VocabHash,
        eos: u32,
        params: Vec<f64>,
    ) -> Result<Self, LmError> {
        hp.validate()?;
        let layout = Layout::new(vocab_size, &hp);
        if params.len() != layout.total {
            return Err(LmError::InvalidHyperparams(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(LstmModel {
            hp,
            vocab_hash,
            eos,
            layout,
            params,
        })
    }

    pub fn hyperparams(&self) -> &LstmHyperparams {
        &self.hp
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Named parameter groups as `(name, start, len)`, in storage order.
    pub fn param_groups(&self) -> Vec<(String, usize, usize)> {
        let l = &self.layout;
        let mut out = vec![("embedding".to_owned(), 0, l.vocab * l.embed)];
        for i in 0..self.hp.layers {
            out.push((format!("layer{i}.weight"), l.layer_w[i], l.layer_b[i] - l.layer_w[i]));
            out.push((format!("layer{i}.bias"), l.layer_b[i], 4 * l.units));
        }
        out.push(("output.weight".to_owned(), l.out_w, l.vocab * l.units));
        out.push(("output.bias".to_owned(), l.out_b, l.vocab));
        out
    }

    fn embedding(&self, token: u32) -> &[f64] {
        let e = self.layout.embed;
        let start = token as usize * e;
        &self.params[start..start + e]
    }

    /// One cell update; returns the activated gates and the new `(h, c)`.
    fn cell(&self, layer: usize, xh: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.layout.units;
        let w_off = self.layout.layer_w[layer];
        let b_off = self.layout.layer_b[layer];
        let cols = xh.len();
        let mut z = self.params[b_off..b_off + 4 * h].to_vec();
        matvec_acc(&self.params[w_off..w_off + 4 * h * cols], xh, &mut z);
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = if (2 * h..3 * h).contains(&j) {
                zj.tanh()
            } else {
                sigmoid(*zj)
            };
        }
        let mut c = vec![0.0; h];
        let mut hn = vec![0.0; h];
        for u in 0..h {
            let (i, f, g, o) = (z[u], z[h + u], z[2 * h + u], z[3 * h + u]);
            c[u] = f * c_prev[u] + i * g;
            hn[u] = o * c[u].tanh();
        }
        (z, hn, c)
    }

    fn logits(&self, top: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let mut out = self.params[l.out_b..l.out_b + l.vocab].to_vec();
        matvec_acc(&self.params[l.out_w..l.out_w + l.vocab * l.units], top, &mut out);
        out
    }

    fn step(&self, state: &LstmState, token: u32) -> LstmState {
        let mut next = state.clone();
        let mut x = self.embedding(token).to_vec();
        for layer in 0..self.hp.layers {
            let mut xh = x;
            xh.extend_from_slice(&state.h[layer]);
            let (_, h, c) = self.cell(layer, &xh, &state.c[layer]);
            next.c[layer] = c;
            next.h[layer] = h.clone();
            x = h;
        }
        next
    }

    /// Forward pass over `inputs`, keeping everything backprop needs.
    fn forward_cached<R: Rng>(
        &self,
        inputs: &[u32],
        targets: &[u32],
        init: &LstmState,
        mut dropout_rng: Option<&mut R>,
    ) -> (Vec<StepCache>, LstmState, f64) {
        let p = self.hp.dropout;
        let mut state = init.clone();
        let mut steps = Vec::with_capacity(inputs.len());
        let mut loss = 0.0;
        for (&token, &target) in inputs.iter().zip(targets) {
            let mut x = self.embedding(token).to_vec();
            let mut cells = Vec::with_capacity(self.hp.layers);
            for layer in 0..self.hp.layers {
                let in_mask = match dropout_rng.as_deref_mut() {
                    Some(rng) if p > 0.0 => {
                        let m = dropout_mask(x.len(), p, rng);
                        x.iter_mut().zip(&m).for_each(|(a, b)| *a *= b);
                        m
                    }
                    _ => Vec::new(),
                };
                let mut xh = x;
                xh.extend_from_slice(&state.h[layer]);
                let (gates, h, c) = self.cell(layer, &xh, &state.c[layer]);
                let tanh_c = c.iter().map(|v| v.tanh()).collect();
                cells.push(CellCache {
                    xh,
                    c_prev: std::mem::replace(&mut state.c[layer], c),
                    gates,
                    tanh_c,
                    in_mask,
                });
                state.h[layer] = h.clone();
                x = h;
            }
            let top_mask = match dropout_rng.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    let m = dropout_mask(x.len(), p, rng);
                    x.iter_mut().zip(&m).for_each(|(a, b)| *a *= b);
                    m
                }
                _ => Vec::new(),
            };
            let logp = log_softmax(&self.logits(&x));
            loss -= logp[target as usize];
            steps.push(StepCache {
                token,
                target,
                cells,
                top: x,
                top_mask,
                probs: logp.into_iter().map(f64::exp).collect(),
            });
        }
        (steps, state, loss)
    }

    /// Summed cross-entropy of predicting `targets[t]` after `inputs[..=t]`.
    pub fn segment_loss(&self, inputs: &[u32], targets: &[u32], init: &LstmState) -> (f64, LstmState) {
        let mut state = init.clone();
        let mut loss = 0.0;
        for (&tok, &target) in inputs.iter().zip(targets) {
            state = self.step(&state, tok);
            loss -= log_softmax(&self.logits(&state.h[self.hp.layers - 1]))[target as usize];
        }
        (loss, state)
    }

    /// Backpropagation through time over one segment. Gradients flowing into
    /// `init` are discarded (truncated BPTT).
    pub fn segment_grad<R: Rng>(
        &self,
        inputs: &[u32],
        targets: &[u32],
        init: &LstmState,
        dropout_rng: Option<&mut R>,
    ) -> SegmentGrad {
        let (steps, final_state, loss) = self.forward_cached(inputs, targets, init, dropout_rng);
        let l = &self.layout;
        let h = l.units;
        let layers = self.hp.layers;
        let mut grad = vec![0.0; l.total];
        let mut dh_next = vec![vec![0.0; h]; layers];
        let mut dc_next = vec![vec![0.0; h]; layers];

        for step in steps.iter().rev() {
            let mut dlogits = step.probs.clone();
            dlogits[step.target as usize] -= 1.0;
            outer_acc(&mut grad[l.out_w..l.out_w + l.vocab * h], &dlogits, &step.top);
            for (g, d) in grad[l.out_b..l.out_b + l.vocab].iter_mut().zip(&dlogits) {
                *g += d;
            }
            let mut dabove = vec![0.0; h];
            matvec_t_acc(&self.params[l.out_w..l.out_w + l.vocab * h], &dlogits, &mut dabove);
            if !step.top_mask.is_empty() {
                dabove.iter_mut().zip(&step.top_mask).for_each(|(a, m)| *a *= m);
            }

            for layer in (0..layers).rev() {
                let cache = &step.cells[layer];
                let input = l.input_dim(layer);
                let cols = input + h;
                let mut dz = vec![0.0; 4 * h];
                for u in 0..h {
                    let (i, f, g, o) = (
                        cache.gates[u],
                        cache.gates[h + u],
                        cache.gates[2 * h + u],
                        cache.gates[3 * h + u],
                    );
                    let tc = cache.tanh_c[u];
                    let dh = dabove[u] + dh_next[layer][u];
                    let dc = dc_next[layer][u] + dh * o * (1.0 - tc * tc);
                    dz[u] = dc * g * i * (1.0 - i);
                    dz[h + u] = dc * cache.c_prev[u] * f * (1.0 - f);
                    dz[2 * h + u] = dc * i * (1.0 - g * g);
                    dz[3 * h + u] = dh * tc * o * (1.0 - o);
                    dc_next[layer][u] = dc * f;
                }
                let w_off = l.layer_w[layer];
                let b_off = l.layer_b[layer];
                outer_acc(&mut grad[w_off..w_off + 4 * h * cols], &dz, &cache.xh);
                for (g, d) in grad[b_off..b_off + 4 * h].iter_mut().zip(&dz) {
                    *g += d;
                }
                let mut dxh = vec![0.0; cols];
                matvec_t_acc(&self.params[w_off..w_off + 4 * h * cols], &dz, &mut dxh);
                dh_next[layer].copy_from_slice(&dxh[input..]);
                let mut dx = dxh;
                dx.truncate(input);
                if !cache.in_mask.is_empty() {
                    dx.iter_mut().zip(&cache.in_mask).for_each(|(a, m)| *a *= m);
                }
                if layer == 0 {
                    let e0 = step.token as usize * l.embed;
                    for (g, d) in grad[e0..e0 + l.embed].iter_mut().zip(&dx) {
                        *g += d;
                    }
                } else {
                    dabove = dx;
                }
            }
        }
        SegmentGrad {
            loss,
            grad,
            final_state,
        }
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState::zeros(self.hp.layers, self.hp.units)
    }
}

impl LanguageModel for LstmModel {
    type Context = LstmState;

    fn vocab_size(&self) -> usize {
        self.layout.vocab
    }

    fn vocab_hash(&self) -> VocabHash {
        self.vocab_hash
    }

    fn eos(&self) -> u32 {
        self.eos
    }

    fn start_context(&self) -> LstmState {
        self.zero_state()
    }

    fn scores(&self, ctx: &LstmState) -> Vec<f64> {
        self.logits(&ctx.h[self.hp.layers - 1])
    }

    fn advance(&self, ctx: &LstmState, token: u32) -> Result<LstmState, LmError> {
        check_index(token, self.layout.vocab)?;
        Ok(self.step(ctx, token))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_vocab() -> Vocabulary {
        Vocabulary::from_counts(["a", "b", "c", "d"].iter().map(|w| (Token::new(*w).unwrap(), 1))).unwrap()
    }

    fn tiny_hp() -> LstmHyperparams {
        LstmHyperparams {
            layers: 1,
            units: 8,
            embed_dim: 5,
            unroll_steps: 5,
            batch_size: 1,
            lr_init: 1.0,
            lr_decay: 2.0,
            clip_norm: None,
            dropout: 0.0,
        }
    }

    #[test]
    fn zero_weights_give_half_open_gates() {
        let v = tiny_vocab();
        let mut m = LstmModel::new(&v, tiny_hp(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let s = m.advance(&m.start_context(), 0).unwrap();
        // i = f = o = σ(0) = 0.5, g = tanh(0) = 0 ⇒ c = 0, h = 0
        assert!(s.c[0].iter().all(|&x| x == 0.0));
        assert!(s.h[0].iter().all(|&x| x == 0.0));
        let p = m.next_distribution(&s);
        assert!(p.iter().all(|&x| (x - 1.0 / v.len() as f64).abs() < 1e-15));

        // with only the candidate bias set to 1: c = 0.5·tanh(1), h = 0.5·tanh(c)
        let b = m.layout.layer_b[0];
        let units = m.layout.units;
        for u in 0..units {
            m.params_mut()[b + 2 * units + u] = 1.0;
        }
        let s1 = m.advance(&m.start_context(), 0).unwrap();
        let c1 = 0.5 * 1f64.tanh();
        let h1 = 0.5 * c1.tanh();
        assert!(s1.c[0].iter().all(|&x| (x - c1).abs() < 1e-15));
        assert!(s1.h[0].iter().all(|&x| (x - h1).abs() < 1e-15));
        // second step: c2 = 0.5·c1 + 0.5·tanh(1)
        let s2 = m.advance(&s1, 1).unwrap();
        let c2 = 0.5 * c1 + 0.5 * 1f64.tanh();
        assert!(s2.c[0].iter().all(|&x| (x - c2).abs() < 1e-15));
        assert!(s2.h[0].iter().all(|&x| (x - 0.5 * c2.tanh()).abs() < 1e-15));
    }

    #[test]
    fn advance_is_deterministic_and_pure() {
        let v = tiny_vocab();
        let m = LstmModel::new(&v, tiny_hp(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let s0 = m.advance(&m.start_context(), 2).unwrap();
        let before = s0.clone();
        let a = m.advance(&s0, 1).unwrap();
        let b = m.advance(&s0, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(s0, before);
        assert!(m.advance(&s0, 77).is_err());
    }

    #[test]
    fn cached_forward_matches_inference_path() {
        let v = tiny_vocab();
        let mut hp = tiny_hp();
        hp.layers = 2;
        let m = LstmModel::new(&v, hp, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let inputs = [0, 1, 2, 3, 1];
        let targets = [1, 2, 3, 1, 0];
        let (loss, state) = m.segment_loss(&inputs, &targets, &m.zero_state());
        let g = m.segment_grad::<ChaCha8Rng>(&inputs, &targets, &m.zero_state(), None);
        assert!((loss - g.loss).abs() < 1e-12);
        assert_eq!(state, g.final_state);
    }

    #[test]
    fn layout_counts_every_parameter() {
        let hp = LstmHyperparams { layers: 2, ..tiny_hp() };
        let l = Layout::new(6, &hp);
        let expected = 6 * 5 + (4 * 8 * (5 + 8) + 32) + (4 * 8 * (8 + 8) + 32) + 6 * 8 + 6;
        assert_eq!(l.total, expected);
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(LstmHyperparams::desk().validate().is_ok());
        assert!(LstmHyperparams::twitter().validate().is_ok());
        assert!(LstmHyperparams::enron().validate().is_ok());
        let bad = [
            LstmHyperparams { units: 0, ..tiny_hp() },
            LstmHyperparams {
                lr_decay: 1.0,
                ..tiny_hp()
            },
            LstmHyperparams {
                dropout: 1.0,
                ..tiny_hp()
            },
            LstmHyperparams {
                clip_norm: Some(0.0),
                ..tiny_hp()
            },
        ];
        for hp in bad {
            assert!(hp.validate().is_err(), "{hp:?}");
        }
    }
}
