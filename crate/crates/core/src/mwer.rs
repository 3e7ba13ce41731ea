//! ILM-fusion-aware minimum word error rate training pieces.
//!
//! Over an N-best list the loss is the expected number of word errors
//! under the renormalized hypothesis distribution
//!
//!   P̂_i = softmax_i(log P(y_i|x) + β·Σ_u log P_ilm(y_i,u))
//!   L    = Σ_i P̂_i · R_i
//!
//! with R_i the word edit distance to the reference and no length
//! normalization. `log P(y_i|x)` comes from the (band-restricted) lattice
//! full-sum; the band is derived from the hypothesis's best decoding
//! alignment plus left/right frame context.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{BandMask, LatticeError};
use crate::math::log_sum_exp;

#[derive(Debug, Error, PartialEq)]
pub enum MwerError {
    #[error("empty N-best list")]
    EmptyNBest,
    #[error("degenerate N-best: every hypothesis has zero probability mass")]
    DegenerateScores,
    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// One scored hypothesis of an N-best list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestItem {
    pub tokens: Vec<usize>,
    /// log P(y|x) from the (restricted) full-sum lattice loss, negated.
    pub full_sum_logprob: f64,
    /// Σ_u log P_ilm(y_u | history), the raw unscaled ILM mass.
    pub ilm_logprob_sum: f64,
    /// R(y, y_ref): word edit distance to the reference.
    pub word_errors: usize,
}

/// Left/right frame context around an alignment, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandConfig {
    pub left_context: usize,
    pub right_context: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        // 15 frames each side balances path coverage against lattice size.
        Self {
            left_context: 15,
            right_context: 15,
        }
    }
}

impl BandConfig {
    pub fn symmetric(context: usize) -> Self {
        Self {
            left_context: context,
            right_context: context,
        }
    }
}

/// Levenshtein distance with unit substitution/insertion/deletion costs.
/// Empty sequences are fine; the distance is then the other's length.
pub fn word_edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    if hyp.is_empty() {
        return reference.len();
    }
    if reference.is_empty() {
        return hyp.len();
    }
    let m = reference.len();
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut curr = vec![0usize; m + 1];
    for (i, h) in hyp.iter().enumerate() {
        curr[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let cost = usize::from(h != r);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// One step of an optimal hypothesis/reference alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    /// hyp[hyp_pos] == ref[ref_pos]
    Match { hyp_pos: usize, ref_pos: usize },
    /// hyp[hyp_pos] replaces ref[ref_pos]
    Substitute { hyp_pos: usize, ref_pos: usize },
    /// hyp[hyp_pos] has no reference counterpart
    Insert { hyp_pos: usize },
    /// ref[ref_pos] is missing from the hypothesis
    Delete { ref_pos: usize },
}

/// Full DP backtrace of one optimal alignment. Ties are broken
/// deterministically: diagonal (match/substitute) first, then deletion,
/// then insertion, so error attribution is reproducible.
pub fn edit_operations<T: PartialEq>(hyp: &[T], reference: &[T]) -> Vec<EditOp> {
    let n = hyp.len();
    let m = reference.len();
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    for i in 0..=n {
        dp[i * (m + 1)] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(hyp[i - 1] != reference[j - 1]);
            dp[i * (m + 1) + j] = (dp[(i - 1) * (m + 1) + j] + 1)
                .min(dp[i * (m + 1) + j - 1] + 1)
                .min(dp[(i - 1) * (m + 1) + j - 1] + cost);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * (m + 1) + j];
        if i > 0 && j > 0 {
            let cost = usize::from(hyp[i - 1] != reference[j - 1]);
            if dp[(i - 1) * (m + 1) + j - 1] + cost == here {
                ops.push(if cost == 0 {
                    EditOp::Match {
                        hyp_pos: i - 1,
                        ref_pos: j - 1,
                    }
                } else {
                    EditOp::Substitute {
                        hyp_pos: i - 1,
                        ref_pos: j - 1,
                    }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && dp[i * (m + 1) + j - 1] + 1 == here {
            ops.push(EditOp::Delete { ref_pos: j - 1 });
            j -= 1;
        } else {
            ops.push(EditOp::Insert { hyp_pos: i - 1 });
            i -= 1;
        }
    }
    ops.reverse();
    ops
}

fn fused_scores(nbest: &[NBestItem], beta: f64) -> Result<Vec<f64>, MwerError> {
    if nbest.is_empty() {
        return Err(MwerError::EmptyNBest);
    }
    let fused: Vec<f64> = nbest
        .iter()
        .map(|h| h.full_sum_logprob + beta * h.ilm_logprob_sum)
        .collect();
    if log_sum_exp(&fused) == f64::NEG_INFINITY {
        return Err(MwerError::DegenerateScores);
    }
    Ok(fused)
}

fn hypothesis_posterior(nbest: &[NBestItem], beta: f64) -> Result<Vec<f64>, MwerError> {
    let fused = fused_scores(nbest, beta)?;
    let z = log_sum_exp(&fused);
    Ok(fused.iter().map(|&s| (s - z).exp()).collect())
}

/// Expected word errors under the fused hypothesis posterior.
pub fn mwer_loss(nbest: &[NBestItem], beta: f64) -> Result<f64, MwerError> {
    let post = hypothesis_posterior(nbest, beta)?;
    Ok(post
        .iter()
        .zip(nbest)
        .map(|(&p, h)| p * h.word_errors as f64)
        .sum())
}

/// ∂loss/∂full_sum_logprob_i = P̂_i·(R_i - Σ_j P̂_j R_j); the softmax
/// identity makes the gradients sum to zero.
pub fn mwer_gradients(nbest: &[NBestItem], beta: f64) -> Result<Vec<f64>, MwerError> {
    let post = hypothesis_posterior(nbest, beta)?;
    let expected: f64 = post
        .iter()
        .zip(nbest)
        .map(|(&p, h)| p * h.word_errors as f64)
        .sum();
    Ok(post
        .iter()
        .zip(nbest)
        .map(|(&p, h)| p * (h.word_errors as f64 - expected))
        .collect())
}

/// Builds the band of lattice states reachable within `C_l` frames left
/// and `C_r` frames right of a decoding alignment.
///
/// Token u+1 (emitted at frame `a_{u+1}` by the alignment) may be emitted
/// at any frame in `[a_{u+1}-C_l, a_{u+1}+C_r]` clamped to the frame
/// range; row-u validity spans from the earliest entry into the row to the
/// latest exit, and a final reachability prune drops anything that cannot
/// lie on a complete path. The generating alignment itself is always
/// inside the band.
pub fn band_from_alignment(
    alignment: &[usize],
    config: BandConfig,
    frames: usize,
) -> Result<BandMask, MwerError> {
    if frames == 0 {
        return Err(MwerError::InvalidAlignment("zero frames".into()));
    }
    for pair in alignment.windows(2) {
        if pair[1] < pair[0] {
            return Err(MwerError::InvalidAlignment(format!(
                "emission frames must be non-decreasing, got {} after {}",
                pair[1], pair[0]
            )));
        }
    }
    if let Some(&last) = alignment.iter().max() {
        if last >= frames {
            return Err(MwerError::InvalidAlignment(format!(
                "emission frame {last} outside 0..{frames}"
            )));
        }
    }
    let target_len = alignment.len();
    let rows = target_len + 1;
    let last_frame = frames - 1;

    // Row u is enterable from the emission window of token u and must
    // reach the emission window of token u+1.
    let lo = |u: usize| -> usize {
        if u == 0 {
            0
        } else {
            alignment[u - 1].saturating_sub(config.left_context)
        }
    };
    let hi = |u: usize| -> usize {
        if u == target_len {
            last_frame
        } else {
            (alignment[u] + config.right_context).min(last_frame)
        }
    };

    let mut valid = vec![false; frames * rows];
    for u in 0..rows {
        for t in lo(u)..=hi(u) {
            valid[t * rows + u] = true;
        }
    }

    // Prune states that cannot sit on a complete (0,0) → (T-1,U) path.
    let mut fwd = vec![false; frames * rows];
    for t in 0..frames {
        for u in 0..rows {
            if !valid[t * rows + u] {
                continue;
            }
            fwd[t * rows + u] = (t == 0 && u == 0)
                || (t > 0 && fwd[(t - 1) * rows + u])
                || (u > 0 && fwd[t * rows + u - 1]);
        }
    }
    let mut bwd = vec![false; frames * rows];
    for t in (0..frames).rev() {
        for u in (0..rows).rev() {
            if !valid[t * rows + u] {
                continue;
            }
            bwd[t * rows + u] = (t == last_frame && u == target_len)
                || (t + 1 < frames && bwd[(t + 1) * rows + u])
                || (u + 1 < rows && bwd[t * rows + u + 1]);
        }
    }
    for i in 0..valid.len() {
        valid[i] = fwd[i] && bwd[i];
    }

    Ok(BandMask::new(frames, target_len, valid)?)
}

/// Combined objective: MWER plus a small RNN-T regularizer on the
/// ground-truth alignment band.
pub fn combined_loss(mwer: f64, rnnt: f64, lambda_rnnt: f64) -> f64 {
    assert!(
        lambda_rnnt >= 0.0,
        "lambda_rnnt must be non-negative, got {lambda_rnnt}"
    );
    mwer + lambda_rnnt * rnnt
}
