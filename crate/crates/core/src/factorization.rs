//! Factorized score assembly.
//!
//! A factorized transducer splits the per-cell posterior into three parts:
//! a Bernoulli blank probability from a scalar joiner logit, a per-frame
//! acoustic distribution, and a per-history internal-LM distribution. The
//! non-blank posterior used for training is
//!
//!   P(k | t, u) = (1 - P_b) · softmax(log P_am + log P_ilm)[k]
//!
//! and the fused decode score generalizes it with two ILM weights:
//!
//!   score(k) = log((1 - P_b) · softmax(log P_am + α·log P_ilm)[k])
//!            + β·log P_ilm[k]
//!
//! With α=1, β=0 the decode score reduces to the training log-probability
//! through the identical code path, so the reduction holds bit-exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticeGradients, LogProbLattice};
use crate::math::{log_sigmoid_pair, log_softmax, log_sum_exp, sigmoid};

#[derive(Debug, Error, PartialEq)]
pub enum FactorizationError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token id {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("invalid fusion weights: {0}")]
    InvalidWeights(String),
    #[error("non-finite logit: {0}")]
    NonFiniteLogit(f64),
}

/// ILM fusion weights (α inside the non-blank softmax, β outside).
///
/// α is capped at 2 to cover the sweep range including over-weighting;
/// training always uses (1, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    alpha: f64,
    beta: f64,
}

impl FusionWeights {
    pub const MAX_ALPHA: f64 = 2.0;

    pub fn new(alpha: f64, beta: f64) -> Result<Self, FactorizationError> {
        if !alpha.is_finite() || !(0.0..=Self::MAX_ALPHA).contains(&alpha) {
            return Err(FactorizationError::InvalidWeights(format!(
                "alpha {alpha} outside [0, {}]",
                Self::MAX_ALPHA
            )));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(FactorizationError::InvalidWeights(format!(
                "beta {beta} must be a finite non-negative real"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Training-mode weights: ILM fully inside the softmax, nothing outside.
    pub fn training() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
        }
    }

    /// The tuned production decode weights.
    pub fn production() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.6,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Factorized score tensors for one utterance/target pair.
///
/// The factorized structure is encoded in the shapes: acoustic logits
/// depend only on the frame, ILM logits only on the history position, and
/// the blank joiner logit on both.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedScores {
    frames: usize,
    histories: usize,
    vocab: usize,
    am_logits: Vec<f64>,
    ilm_logits: Vec<f64>,
    blank_logits: Vec<f64>,
}

impl FactorizedScores {
    /// Row-major buffers: `am_logits[t*V + k]`, `ilm_logits[u*V + k]`,
    /// `blank_logits[t*histories + u]`. All entries must be finite.
    pub fn new(
        frames: usize,
        histories: usize,
        vocab: usize,
        am_logits: Vec<f64>,
        ilm_logits: Vec<f64>,
        blank_logits: Vec<f64>,
    ) -> Result<Self, FactorizationError> {
        if frames == 0 || histories == 0 || vocab == 0 {
            return Err(FactorizationError::ShapeMismatch(
                "frames, histories and vocab must all be positive".into(),
            ));
        }
        if am_logits.len() != frames * vocab {
            return Err(FactorizationError::ShapeMismatch(format!(
                "am_logits has {} entries, expected {frames}x{vocab}",
                am_logits.len()
            )));
        }
        if ilm_logits.len() != histories * vocab {
            return Err(FactorizationError::ShapeMismatch(format!(
                "ilm_logits has {} entries, expected {histories}x{vocab}",
                ilm_logits.len()
            )));
        }
        if blank_logits.len() != frames * histories {
            return Err(FactorizationError::ShapeMismatch(format!(
                "blank_logits has {} entries, expected {frames}x{histories}",
                blank_logits.len()
            )));
        }
        for &x in am_logits
            .iter()
            .chain(ilm_logits.iter())
            .chain(blank_logits.iter())
        {
            if !x.is_finite() {
                return Err(FactorizationError::NonFiniteLogit(x));
            }
        }
        Ok(Self {
            frames,
            histories,
            vocab,
            am_logits,
            ilm_logits,
            blank_logits,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Number of history positions (target length + 1 when paired with a
    /// target).
    pub fn histories(&self) -> usize {
        self.histories
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn am_row(&self, t: usize) -> &[f64] {
        &self.am_logits[t * self.vocab..(t + 1) * self.vocab]
    }

    pub fn ilm_row(&self, u: usize) -> &[f64] {
        &self.ilm_logits[u * self.vocab..(u + 1) * self.vocab]
    }

    pub fn blank_logit(&self, t: usize, u: usize) -> f64 {
        self.blank_logits[t * self.histories + u]
    }
}

/// `(log P_b, log(1-P_b))` from the scalar blank joiner logit.
pub fn blank_logprob(blank_logit: f64) -> Result<(f64, f64), FactorizationError> {
    if !blank_logit.is_finite() {
        return Err(FactorizationError::NonFiniteLogit(blank_logit));
    }
    Ok(log_sigmoid_pair(blank_logit))
}

fn check_vocab_pair(am: &[f64], ilm: &[f64]) -> Result<(), FactorizationError> {
    if am.len() != ilm.len() || am.is_empty() {
        return Err(FactorizationError::ShapeMismatch(format!(
            "am has {} entries, ilm has {}",
            am.len(),
            ilm.len()
        )));
    }
    Ok(())
}

/// The α-fused non-blank log-probability vector
/// `log((1-P_b) · softmax(log P_am + α·log P_ilm))`.
///
/// With α=1 this is the training normalization; its log-sum-exp equals
/// `log(1-P_b)` for every α.
fn fused_nonblank_logprobs(
    am: &[f64],
    ilm: &[f64],
    blank_logit: f64,
    alpha: f64,
) -> Result<Vec<f64>, FactorizationError> {
    check_vocab_pair(am, ilm)?;
    let (_, log_1m_pb) = blank_logprob(blank_logit)?;
    let am_lp = log_softmax(am);
    let ilm_lp = log_softmax(ilm);
    let combined: Vec<f64> = am_lp
        .iter()
        .zip(&ilm_lp)
        .map(|(&a, &i)| a + alpha * i)
        .collect();
    let mut out = log_softmax(&combined);
    for v in &mut out {
        *v += log_1m_pb;
    }
    Ok(out)
}

/// Training-mode non-blank log-probabilities (α=1); `logsumexp` of the
/// result is `log(1-P_b)`, so blank and non-blank together normalize.
pub fn nonblank_train_logprobs(
    am: &[f64],
    ilm: &[f64],
    blank_logit: f64,
) -> Result<Vec<f64>, FactorizationError> {
    fused_nonblank_logprobs(am, ilm, blank_logit, 1.0)
}

/// Fused decode scores for every token:
/// `log((1-P_b)·softmax(log P_am + α·log P_ilm)) + β·log P_ilm`.
///
/// With β>0 this is a ranking function, not a distribution.
pub fn nonblank_decode_scores(
    am: &[f64],
    ilm: &[f64],
    blank_logit: f64,
    weights: FusionWeights,
) -> Result<Vec<f64>, FactorizationError> {
    let mut out = fused_nonblank_logprobs(am, ilm, blank_logit, weights.alpha)?;
    let ilm_lp = log_softmax(ilm);
    for (v, &i) in out.iter_mut().zip(&ilm_lp) {
        *v += weights.beta * i;
    }
    Ok(out)
}

/// Fused decode score for a single token.
pub fn nonblank_decode_score(
    am: &[f64],
    ilm: &[f64],
    blank_logit: f64,
    weights: FusionWeights,
    token: usize,
) -> Result<f64, FactorizationError> {
    if token >= am.len() {
        return Err(FactorizationError::TokenOutOfRange {
            token,
            vocab: am.len(),
        });
    }
    Ok(nonblank_decode_scores(am, ilm, blank_logit, weights)?[token])
}

/// Builds the training lattice for a target: at every cell, blank gets
/// `log P_b` and the label gets the target token's entry of the α=1
/// non-blank log-probabilities.
pub fn build_training_lattice(
    scores: &FactorizedScores,
    target: &[usize],
) -> Result<LogProbLattice, FactorizationError> {
    build_fused_lattice(scores, target, 1.0)
}

/// Lattice with the ILM weighted by α inside the non-blank softmax; the
/// entries remain valid log-probabilities for any α. Used by
/// ILM-fusion-aware sequence training, where hypothesis scores are built
/// with the decode-time α.
pub fn build_fused_lattice(
    scores: &FactorizedScores,
    target: &[usize],
    alpha: f64,
) -> Result<LogProbLattice, FactorizationError> {
    if target.len() + 1 != scores.histories {
        return Err(FactorizationError::ShapeMismatch(format!(
            "target of {} tokens needs {} history rows, scores have {}",
            target.len(),
            target.len() + 1,
            scores.histories
        )));
    }
    for &k in target {
        if k >= scores.vocab {
            return Err(FactorizationError::TokenOutOfRange {
                token: k,
                vocab: scores.vocab,
            });
        }
    }
    let t_len = scores.frames;
    let u_len = target.len();

    // Per-row log-softmaxes are shared across cells.
    let am_lp: Vec<Vec<f64>> = (0..t_len).map(|t| log_softmax(scores.am_row(t))).collect();
    let ilm_lp: Vec<Vec<f64>> = (0..=u_len)
        .map(|u| log_softmax(scores.ilm_row(u)))
        .collect();

    let mut blank = vec![0.0; t_len * (u_len + 1)];
    let mut label = vec![0.0; t_len * u_len];
    let mut combined = vec![0.0; scores.vocab];
    for t in 0..t_len {
        for u in 0..=u_len {
            let (log_pb, log_1m_pb) = log_sigmoid_pair(scores.blank_logit(t, u));
            blank[t * (u_len + 1) + u] = log_pb;
            if u < u_len {
                for k in 0..scores.vocab {
                    combined[k] = am_lp[t][k] + alpha * ilm_lp[u][k];
                }
                // Same evaluation order as nonblank_train_logprobs, so
                // cells equal its entries bit for bit.
                let z = log_sum_exp(&combined);
                label[t * u_len + u] = (combined[target[u]] - z) + log_1m_pb;
            }
        }
    }
    LogProbLattice::new(t_len, u_len, blank, label)
        .map_err(|e| FactorizationError::ShapeMismatch(e.to_string()))
}

/// Gradients of a lattice loss pushed back onto the factorized logits.
#[derive(Debug, Clone)]
pub struct ScoreGradients {
    pub am: Vec<f64>,
    pub ilm: Vec<f64>,
    pub blank: Vec<f64>,
}

impl ScoreGradients {
    fn zeros(scores: &FactorizedScores) -> Self {
        Self {
            am: vec![0.0; scores.frames * scores.vocab],
            ilm: vec![0.0; scores.histories * scores.vocab],
            blank: vec![0.0; scores.frames * scores.histories],
        }
    }
}

/// Chains per-cell lattice gradients back to am/ilm/blank logits for the
/// lattice built by [`build_fused_lattice`] with the same `alpha`.
///
/// For the label cell (t,u) with target token k and fused posterior
/// p = softmax(log P_am + α·log P_ilm), the double log-softmax collapses:
/// ∂label_lp/∂am_v = δ_vk - p_v and ∂label_lp/∂ilm_v = α·(δ_vk - p_v).
/// The blank logit z receives g_blank·σ(-z) - g_label·σ(z).
pub fn score_gradients_from_lattice(
    scores: &FactorizedScores,
    target: &[usize],
    alpha: f64,
    cell_grads: &LatticeGradients,
) -> Result<ScoreGradients, FactorizationError> {
    if target.len() + 1 != scores.histories {
        return Err(FactorizationError::ShapeMismatch(format!(
            "target of {} tokens needs {} history rows, scores have {}",
            target.len(),
            target.len() + 1,
            scores.histories
        )));
    }
    let t_len = scores.frames;
    let u_len = target.len();
    let v = scores.vocab;
    if cell_grads.blank.len() != t_len * (u_len + 1) || cell_grads.label.len() != t_len * u_len {
        return Err(FactorizationError::ShapeMismatch(
            "lattice gradient buffers do not match score dimensions".into(),
        ));
    }

    let mut out = ScoreGradients::zeros(scores);
    if cell_grads.no_path_mass {
        return Ok(out);
    }

    let am_lp: Vec<Vec<f64>> = (0..t_len).map(|t| log_softmax(scores.am_row(t))).collect();
    let ilm_lp: Vec<Vec<f64>> = (0..=u_len)
        .map(|u| log_softmax(scores.ilm_row(u)))
        .collect();

    let mut combined = vec![0.0; v];
    for t in 0..t_len {
        for u in 0..=u_len {
            let z = scores.blank_logit(t, u);
            let g_b = cell_grads.blank[t * (u_len + 1) + u];
            let mut g_z = g_b * sigmoid(-z);
            if u < u_len {
                let g_l = cell_grads.label[t * u_len + u];
                g_z -= g_l * sigmoid(z);
                if g_l != 0.0 {
                    for k in 0..v {
                        combined[k] = am_lp[t][k] + alpha * ilm_lp[u][k];
                    }
                    let zc = log_sum_exp(&combined);
                    let tgt = target[u];
                    for k in 0..v {
                        let p = (combined[k] - zc).exp();
                        let delta = if k == tgt { 1.0 } else { 0.0 };
                        let g = g_l * (delta - p);
                        out.am[t * v + k] += g;
                        out.ilm[u * v + k] += alpha * g;
                    }
                }
            }
            out.blank[t * scores.histories + u] += g_z;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_differences, max_relative_error, DEFAULT_EPS, DEFAULT_FLOOR};
    use crate::lattice::{full_sum_loss, loss_gradients};
    use proptest::prelude::*;
    use rand_core::{RngCore, SeedableRng};

    fn uniform01(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_logits(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| 4.0 * uniform01(rng) - 2.0).collect()
    }

    fn random_scores(
        frames: usize,
        histories: usize,
        vocab: usize,
        seed: u64,
    ) -> FactorizedScores {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FactorizedScores::new(
            frames,
            histories,
            vocab,
            random_logits(frames * vocab, &mut rng),
            random_logits(histories * vocab, &mut rng),
            random_logits(frames * histories, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn blank_logprob_symmetry_and_tails() {
        let (lp, lq) = blank_logprob(0.0).unwrap();
        assert_eq!(lp, lq);
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
        let (lp, lq) = blank_logprob(30.0).unwrap();
        assert!((lp - (-9.357622968839737e-14)).abs() < 1e-26);
        assert!((lq + 30.0).abs() < 1e-12);
        assert!(blank_logprob(f64::INFINITY).is_err());
    }

    #[test]
    fn uniform_inputs_give_uniform_nonblank() {
        let am = vec![0.0; 4];
        let ilm = vec![0.0; 4];
        let lp = nonblank_train_logprobs(&am, &ilm, 0.0).unwrap();
        let expected = (0.5f64 * 0.25).ln();
        for v in lp {
            assert!((v - expected).abs() < 1e-14, "{v} vs {expected}");
        }
    }

    #[test]
    fn train_logprobs_match_linear_domain_oracle() {
        // Direct linear-domain computation at small V, no log tricks.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let v = 2 + (rng.next_u64() % 15) as usize;
            let am = random_logits(v, &mut rng);
            let ilm = random_logits(v, &mut rng);
            let z = 4.0 * uniform01(&mut rng) - 2.0;

            let pb = 1.0 / (1.0 + (-z).exp());
            let am_sum: f64 = am.iter().map(|x| x.exp()).sum();
            let ilm_sum: f64 = ilm.iter().map(|x| x.exp()).sum();
            let pam: Vec<f64> = am.iter().map(|x| x.exp() / am_sum).collect();
            let pilm: Vec<f64> = ilm.iter().map(|x| x.exp() / ilm_sum).collect();
            let joint: Vec<f64> = pam.iter().zip(&pilm).map(|(&a, &i)| a * i).collect();
            let joint_sum: f64 = joint.iter().sum();
            let expected: Vec<f64> = joint
                .iter()
                .map(|&j| ((1.0 - pb) * j / joint_sum).ln())
                .collect();

            let got = nonblank_train_logprobs(&am, &ilm, z).unwrap();
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() <= 1e-10, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn normalization_identity_holds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let v = 2 + (rng.next_u64() % 12) as usize;
            let am = random_logits(v, &mut rng);
            let ilm = random_logits(v, &mut rng);
            let z = 6.0 * uniform01(&mut rng) - 3.0;
            let (log_pb, _) = blank_logprob(z).unwrap();
            let lp = nonblank_train_logprobs(&am, &ilm, z).unwrap();
            let total = log_pb.exp() + lp.iter().map(|x| x.exp()).sum::<f64>();
            assert!((total - 1.0).abs() <= 1e-12, "normalization off: {total}");
        }
    }

    #[test]
    fn decode_reduces_to_train_bit_exactly() {
        let w = FusionWeights::new(1.0, 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let v = 2 + (rng.next_u64() % 9) as usize;
            let am = random_logits(v, &mut rng);
            let ilm = random_logits(v, &mut rng);
            let z = 4.0 * uniform01(&mut rng) - 2.0;
            let train = nonblank_train_logprobs(&am, &ilm, z).unwrap();
            let decode = nonblank_decode_scores(&am, &ilm, z, w).unwrap();
            for (a, b) in train.iter().zip(&decode) {
                assert_eq!(a.to_bits(), b.to_bits(), "reduction must be exact");
            }
        }
    }

    #[test]
    fn beta_breaks_normalization() {
        // With β>0 the scores are a ranking function; the blank plus the
        // exponentiated scores must drift away from 1 for some draw.
        let w = FusionWeights::new(0.6, 0.6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut saw_broken = false;
        for _ in 0..20 {
            let am = random_logits(6, &mut rng);
            let ilm = random_logits(6, &mut rng);
            let z = 4.0 * uniform01(&mut rng) - 2.0;
            let (log_pb, _) = blank_logprob(z).unwrap();
            let scores = nonblank_decode_scores(&am, &ilm, z, w).unwrap();
            let total = log_pb.exp() + scores.iter().map(|x| x.exp()).sum::<f64>();
            if (total - 1.0).abs() > 1e-6 {
                saw_broken = true;
            }
        }
        assert!(saw_broken, "β>0 should break the normalization somewhere");
    }

    #[test]
    fn production_weights_are_the_tuned_pair() {
        let w = FusionWeights::production();
        assert_eq!((w.alpha(), w.beta()), (0.6, 0.6));
    }

    #[test]
    fn weights_validation() {
        assert!(FusionWeights::new(2.5, 0.0).is_err());
        assert!(FusionWeights::new(-0.1, 0.0).is_err());
        assert!(FusionWeights::new(1.3, 0.0).is_ok(), "sweep range includes α=1.3");
        assert!(FusionWeights::new(0.5, -0.2).is_err());
        assert!(FusionWeights::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn uniform_scores_build_uniform_lattice() {
        let v = 5;
        let scores = FactorizedScores::new(
            2,
            3,
            v,
            vec![0.0; 2 * v],
            vec![0.0; 3 * v],
            vec![0.0; 2 * 3],
        )
        .unwrap();
        let lat = build_training_lattice(&scores, &[1, 3]).unwrap();
        for t in 0..2 {
            for u in 0..=2 {
                assert!((lat.blank(t, u) - 0.5f64.ln()).abs() < 1e-15);
                if u < 2 {
                    assert!((lat.label(t, u) - (0.5 / v as f64).ln()).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lattice_cells_definitionally_consistent() {
        let scores = random_scores(3, 3, 6, 19);
        let target = [4usize, 0];
        let lat = build_training_lattice(&scores, &target).unwrap();
        for t in 0..3 {
            for u in 0..2 {
                let lp = nonblank_train_logprobs(
                    scores.am_row(t),
                    scores.ilm_row(u),
                    scores.blank_logit(t, u),
                )
                .unwrap();
                assert_eq!(lat.label(t, u).to_bits(), lp[target[u]].to_bits());
            }
        }
    }

    #[test]
    fn out_of_vocabulary_target_rejected() {
        let scores = random_scores(2, 2, 4, 23);
        assert!(matches!(
            build_training_lattice(&scores, &[4]),
            Err(FactorizationError::TokenOutOfRange { token: 4, vocab: 4 })
        ));
    }

    #[test]
    fn factorized_shape_sensitivity() {
        let scores = random_scores(4, 4, 5, 29);
        let target = [2usize, 1, 3];
        let base = build_training_lattice(&scores, &target).unwrap();

        // Perturb am at frame 2: only column-2 cells may change.
        let mut am = scores.am_logits.clone();
        am[2 * 5 + 3] += 0.37;
        let bumped = FactorizedScores::new(4, 4, 5, am, scores.ilm_logits.clone(), scores.blank_logits.clone()).unwrap();
        let lat = build_training_lattice(&bumped, &target).unwrap();
        for t in 0..4 {
            for u in 0..3 {
                let same = lat.label(t, u).to_bits() == base.label(t, u).to_bits();
                assert_eq!(same, t != 2, "am frame 2 must only affect column 2");
            }
            for u in 0..=3 {
                assert_eq!(lat.blank(t, u).to_bits(), base.blank(t, u).to_bits());
            }
        }

        // Perturb ilm at history 1: only row-1 label cells may change.
        let mut ilm = scores.ilm_logits.clone();
        ilm[1 * 5 + 2] += 0.51;
        let bumped = FactorizedScores::new(4, 4, 5, scores.am_logits.clone(), ilm, scores.blank_logits.clone()).unwrap();
        let lat = build_training_lattice(&bumped, &target).unwrap();
        for t in 0..4 {
            for u in 0..3 {
                let same = lat.label(t, u).to_bits() == base.label(t, u).to_bits();
                assert_eq!(same, u != 1, "ilm history 1 must only affect row 1");
            }
        }
    }

    fn pack(scores: &FactorizedScores) -> Vec<f64> {
        scores
            .am_logits
            .iter()
            .chain(scores.ilm_logits.iter())
            .chain(scores.blank_logits.iter())
            .copied()
            .collect()
    }

    fn unpack(template: &FactorizedScores, params: &[f64]) -> FactorizedScores {
        let na = template.am_logits.len();
        let ni = template.ilm_logits.len();
        FactorizedScores::new(
            template.frames,
            template.histories,
            template.vocab,
            params[..na].to_vec(),
            params[na..na + ni].to_vec(),
            params[na + ni..].to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        for &alpha in &[1.0, 0.6] {
            let scores = random_scores(3, 3, 5, 31);
            let target = [1usize, 4];

            let lat = build_fused_lattice(&scores, &target, alpha).unwrap();
            let cell_grads = loss_gradients(&lat).unwrap();
            let analytic =
                score_gradients_from_lattice(&scores, &target, alpha, &cell_grads).unwrap();
            let analytic_packed: Vec<f64> = analytic
                .am
                .iter()
                .chain(analytic.ilm.iter())
                .chain(analytic.blank.iter())
                .copied()
                .collect();

            let loss_of = |params: &[f64]| -> f64 {
                let s = unpack(&scores, params);
                full_sum_loss(&build_fused_lattice(&s, &target, alpha).unwrap()).unwrap()
            };
            let numeric = central_differences(loss_of, &pack(&scores), DEFAULT_EPS);
            let err = max_relative_error(&analytic_packed, &numeric, DEFAULT_FLOOR);
            assert!(err <= 1e-4, "alpha={alpha}: max relative error {err}");
        }
    }

    proptest! {
        #[test]
        fn fused_logprobs_sum_to_one_minus_pb(seed in 0u64..300, alpha in 0.0f64..2.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let am = random_logits(7, &mut rng);
            let ilm = random_logits(7, &mut rng);
            let z = 4.0 * uniform01(&mut rng) - 2.0;
            let lp = fused_nonblank_logprobs(&am, &ilm, z, alpha).unwrap();
            let (_, log_1m_pb) = blank_logprob(z).unwrap();
            prop_assert!((log_sum_exp(&lp) - log_1m_pb).abs() < 1e-12);
        }
    }
}
