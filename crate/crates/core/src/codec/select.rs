//! Bin-constrained next-token selection.
//!
//! The model's scores are masked to the admissible set (one bin, optionally
//! with the common tokens) and either the best token is taken or one is drawn
//! from the renormalized, temperature-scaled remainder.

use rand::Rng;

use super::{CodecError, SelectMode};

/// Admissible tokens, sorted by index.
pub(crate) fn admissible(bin: &[u32], common: &[u32], skip_common: &[u32], with_common: bool) -> Vec<u32> {
    let mut out = bin.to_vec();
    if with_common {
        out.extend(common.iter().filter(|c| !skip_common.contains(c)));
        out.sort_unstable();
    }
    out
}

/// Picks one of `candidates` (ascending indices) according to `scores`.
///
/// Greedy ties go to the lowest index. Sampling walks candidates in index
/// order so a given uniform draw always maps to the same token.
pub(crate) fn pick<R: Rng>(
    scores: &[f64],
    candidates: &[u32],
    mode: SelectMode,
    temperature: f64,
    rng: &mut R,
) -> Result<u32, CodecError> {
    let max = candidates
        .iter()
        .map(|&c| scores[c as usize])
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(CodecError::ZeroMass);
    }
    match mode {
        SelectMode::Greedy => Ok(*candidates
            .iter()
            .find(|&&c| scores[c as usize] == max)
            .expect("max is attained")),
        SelectMode::Sample => {
            let weights: Vec<f64> = candidates
                .iter()
                .map(|&c| ((scores[c as usize] - max) / temperature).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(CodecError::ZeroMass);
            }
            let mut u = rng.random::<f64>() * total;
            for (&c, w) in candidates.iter().zip(&weights) {
                if u < *w {
                    return Ok(c);
                }
                u -= w;
            }
            // rounding left a sliver past the last weight
            Ok(*candidates
                .iter()
                .zip(&weights)
                .rev()
                .find(|(_, w)| **w > 0.0)
                .map(|(c, _)| c)
                .expect("total > 0"))
        }
    }
}
