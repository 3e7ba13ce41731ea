//! Toy factorized transducer model.
//!
//! Three factorized parts mirror the architecture the toolkit studies:
//!
//! - encoder: feed-forward over a centered window of feature frames →
//!   shared hidden `h_enc[t]`, projected to per-frame acoustic logits;
//! - blank predictor: stateless — an embedding of the previous token and a
//!   linear layer → `h_pre_b`; the blank joiner adds `h_enc + h_pre_b`,
//!   squashes, and projects to a scalar logit;
//! - non-blank predictor: a frozen pretrained LM supplies the ILM rows and
//!   receives no gradients.
//!
//! Parameters live in one flat buffer (layout below) so SGD, momentum,
//! finite differences and checkpointing all address the same storage.
//!
//! Layout: [w_enc (W·F)×D | b_enc D | w_am D×V | b_am V |
//!          emb_b (V+1)×E | w_pb E×D | b_pb D | w_join D | b_join 1]
//! where row V of emb_b is the start-of-utterance slot.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::decode::TransducerScorer;
use crate::factorization::{FactorizedScores, ScoreGradients};
use crate::ilm::{FrozenLm, LanguageModel};
use crate::rng::{fnv1a64, normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FtDims {
    pub feature_dim: usize,
    /// Centered window width in frames; must be odd.
    pub window: usize,
    /// Shared hidden width of encoder and blank-predictor outputs.
    pub joint_dim: usize,
    pub blank_embed: usize,
    /// Non-blank vocabulary (including the boundary token).
    pub vocab: usize,
}

impl FtDims {
    pub fn param_count(&self) -> usize {
        Layout::of(self).end
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.feature_dim == 0 || self.joint_dim == 0 || self.blank_embed == 0 || self.vocab == 0
        {
            return Err(HarnessError::Config(
                "model dimensions must all be positive".into(),
            ));
        }
        if self.window % 2 == 0 {
            return Err(HarnessError::Config("window must be odd".into()));
        }
        Ok(())
    }
}

/// Offsets of each block in the flat parameter buffer.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w_enc: usize,
    b_enc: usize,
    w_am: usize,
    b_am: usize,
    emb_b: usize,
    w_pb: usize,
    b_pb: usize,
    w_join: usize,
    b_join: usize,
    end: usize,
}

impl Layout {
    fn of(d: &FtDims) -> Self {
        let wf = d.window * d.feature_dim;
        let w_enc = 0;
        let b_enc = w_enc + wf * d.joint_dim;
        let w_am = b_enc + d.joint_dim;
        let b_am = w_am + d.joint_dim * d.vocab;
        let emb_b = b_am + d.vocab;
        let w_pb = emb_b + (d.vocab + 1) * d.blank_embed;
        let b_pb = w_pb + d.blank_embed * d.joint_dim;
        let w_join = b_pb + d.joint_dim;
        let b_join = w_join + d.joint_dim;
        Self {
            w_enc,
            b_enc,
            w_am,
            b_am,
            emb_b,
            w_pb,
            b_pb,
            w_join,
            b_join,
            end: b_join + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyFtModel {
    dims: FtDims,
    params: Vec<f64>,
}

/// Everything the decoder and the backward pass need about one utterance:
/// window inputs, hidden states, acoustic logits, blank-predictor rows and
/// the full per-(frame, previous-token) blank logit table.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    dims: FtDims,
    frames: usize,
    /// T×(W·F) concatenated window inputs.
    windows: Vec<f64>,
    /// T×D tanh hidden states.
    h_enc: Vec<f64>,
    /// T×V acoustic logits.
    am_logits: Vec<f64>,
    /// (V+1)×D blank-predictor outputs per previous token (row V = start).
    h_pre_b: Vec<f64>,
    /// T×(V+1) blank joiner logits.
    blank_table: Vec<f64>,
}

impl EncoderCache {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn am_row(&self, t: usize) -> &[f64] {
        &self.am_logits[t * self.dims.vocab..(t + 1) * self.dims.vocab]
    }

    /// Blank joiner logit at frame `t` given the previous token
    /// (`None` = utterance start).
    pub fn blank_logit(&self, t: usize, prev: Option<usize>) -> f64 {
        let p = prev.unwrap_or(self.dims.vocab);
        self.blank_table[t * (self.dims.vocab + 1) + p]
    }
}

impl ToyFtModel {
    pub fn zeros(dims: FtDims) -> Result<Self, HarnessError> {
        dims.validate()?;
        Ok(Self {
            params: vec![0.0; dims.param_count()],
            dims,
        })
    }

    pub fn random(dims: FtDims, rng: &mut impl RngCore, sigma: f64) -> Result<Self, HarnessError> {
        let mut model = Self::zeros(dims)?;
        for p in &mut model.params {
            *p = sigma * normal(rng);
        }
        Ok(model)
    }

    pub fn dims(&self) -> FtDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn from_parts(dims: FtDims, params: Vec<f64>) -> Result<Self, HarnessError> {
        dims.validate()?;
        if params.len() != dims.param_count() {
            return Err(HarnessError::Config(format!(
                "parameter buffer holds {}, dimensions require {}",
                params.len(),
                dims.param_count()
            )));
        }
        Ok(Self { dims, params })
    }

    pub fn params_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.to_bits().to_le_bytes());
        }
        fnv1a64(&bytes)
    }

    fn window_input(&self, features: &[Vec<f64>], t: usize) -> Vec<f64> {
        let d = &self.dims;
        let half = d.window / 2;
        let mut x = vec![0.0; d.window * d.feature_dim];
        for w in 0..d.window {
            let src = t as i64 + w as i64 - half as i64;
            if src < 0 || src as usize >= features.len() {
                continue;
            }
            x[w * d.feature_dim..(w + 1) * d.feature_dim]
                .copy_from_slice(&features[src as usize]);
        }
        x
    }

    /// Forward pass over one utterance's features.
    pub fn encode(&self, features: &[Vec<f64>]) -> EncoderCache {
        let d = self.dims;
        let l = Layout::of(&d);
        let frames = features.len();
        let wf = d.window * d.feature_dim;

        let mut windows = vec![0.0; frames * wf];
        let mut h_enc = vec![0.0; frames * d.joint_dim];
        let mut am_logits = vec![0.0; frames * d.vocab];
        for t in 0..frames {
            let x = self.window_input(features, t);
            windows[t * wf..(t + 1) * wf].copy_from_slice(&x);
            let h = &mut h_enc[t * d.joint_dim..(t + 1) * d.joint_dim];
            h.copy_from_slice(&self.params[l.b_enc..l.b_enc + d.joint_dim]);
            for (j, &xj) in x.iter().enumerate() {
                if xj == 0.0 {
                    continue;
                }
                let row = &self.params[l.w_enc + j * d.joint_dim..l.w_enc + (j + 1) * d.joint_dim];
                for (i, &w) in row.iter().enumerate() {
                    h[i] += xj * w;
                }
            }
            for v in h.iter_mut() {
                *v = v.tanh();
            }
            let am = &mut am_logits[t * d.vocab..(t + 1) * d.vocab];
            am.copy_from_slice(&self.params[l.b_am..l.b_am + d.vocab]);
            let h = &h_enc[t * d.joint_dim..(t + 1) * d.joint_dim];
            for (i, &hi) in h.iter().enumerate() {
                let row = &self.params[l.w_am + i * d.vocab..l.w_am + (i + 1) * d.vocab];
                for (v, &w) in row.iter().enumerate() {
                    am[v] += hi * w;
                }
            }
        }

        // Blank predictor rows for every possible previous token.
        let mut h_pre_b = vec![0.0; (d.vocab + 1) * d.joint_dim];
        for p in 0..=d.vocab {
            let emb = &self.params[l.emb_b + p * d.blank_embed..l.emb_b + (p + 1) * d.blank_embed];
            let row = &mut h_pre_b[p * d.joint_dim..(p + 1) * d.joint_dim];
            row.copy_from_slice(&self.params[l.b_pb..l.b_pb + d.joint_dim]);
            for (e, &xe) in emb.iter().enumerate() {
                let w = &self.params[l.w_pb + e * d.joint_dim..l.w_pb + (e + 1) * d.joint_dim];
                for (i, &wi) in w.iter().enumerate() {
                    row[i] += xe * wi;
                }
            }
        }

        let w_join = &self.params[l.w_join..l.w_join + d.joint_dim];
        let b_join = self.params[l.b_join];
        let mut blank_table = vec![0.0; frames * (d.vocab + 1)];
        for t in 0..frames {
            let h = &h_enc[t * d.joint_dim..(t + 1) * d.joint_dim];
            for p in 0..=d.vocab {
                let pre = &h_pre_b[p * d.joint_dim..(p + 1) * d.joint_dim];
                let mut z = b_join;
                for i in 0..d.joint_dim {
                    z += w_join[i] * (h[i] + pre[i]).tanh();
                }
                blank_table[t * (d.vocab + 1) + p] = z;
            }
        }

        EncoderCache {
            dims: d,
            frames,
            windows,
            h_enc,
            am_logits,
            h_pre_b,
            blank_table,
        }
    }

    /// Assembles the factorized score tensor for a target: acoustic rows
    /// from the cache, ILM rows from the frozen LM walked along the target
    /// prefix, blank logits picked by previous target token.
    pub fn assemble_scores(
        &self,
        cache: &EncoderCache,
        ilm: &FrozenLm,
        target: &[usize],
    ) -> Result<FactorizedScores, HarnessError> {
        let d = self.dims;
        let histories = target.len() + 1;

        let mut ilm_logits = Vec::with_capacity(histories * d.vocab);
        let mut state = ilm.start_state();
        ilm_logits.extend_from_slice(&ilm.logprobs(&state));
        for &tok in target {
            state = ilm.advance(&state, tok);
            ilm_logits.extend_from_slice(&ilm.logprobs(&state));
        }

        let mut blank = Vec::with_capacity(cache.frames * histories);
        for t in 0..cache.frames {
            for u in 0..histories {
                let prev = if u == 0 { None } else { Some(target[u - 1]) };
                blank.push(cache.blank_logit(t, prev));
            }
        }
        Ok(FactorizedScores::new(
            cache.frames,
            histories,
            d.vocab,
            cache.am_logits.clone(),
            ilm_logits,
            blank,
        )?)
    }

    /// Chains score-tensor gradients into the flat parameter gradient
    /// buffer. ILM gradients are dropped: the non-blank predictor is
    /// frozen by construction.
    pub fn accumulate_param_grads(
        &self,
        cache: &EncoderCache,
        target: &[usize],
        score_grads: &ScoreGradients,
        out: &mut [f64],
    ) {
        let d = self.dims;
        let l = Layout::of(&d);
        assert_eq!(out.len(), self.params.len(), "gradient buffer mismatch");
        let histories = target.len() + 1;
        let w_join = &self.params[l.w_join..l.w_join + d.joint_dim];

        let mut dh_enc = vec![0.0; cache.frames * d.joint_dim];
        let mut dh_pre = vec![0.0; (d.vocab + 1) * d.joint_dim];

        // Blank joiner cells.
        for t in 0..cache.frames {
            let h = &cache.h_enc[t * d.joint_dim..(t + 1) * d.joint_dim];
            for u in 0..histories {
                let g = score_grads.blank[t * histories + u];
                if g == 0.0 {
                    continue;
                }
                let p = if u == 0 { d.vocab } else { target[u - 1] };
                let pre = &cache.h_pre_b[p * d.joint_dim..(p + 1) * d.joint_dim];
                out[l.b_join] += g;
                for i in 0..d.joint_dim {
                    let s = (h[i] + pre[i]).tanh();
                    out[l.w_join + i] += g * s;
                    let dsum = g * w_join[i] * (1.0 - s * s);
                    dh_enc[t * d.joint_dim + i] += dsum;
                    dh_pre[p * d.joint_dim + i] += dsum;
                }
            }
        }

        // Acoustic head.
        for t in 0..cache.frames {
            let h = &cache.h_enc[t * d.joint_dim..(t + 1) * d.joint_dim];
            let g_am = &score_grads.am[t * d.vocab..(t + 1) * d.vocab];
            for v in 0..d.vocab {
                let g = g_am[v];
                if g == 0.0 {
                    continue;
                }
                out[l.b_am + v] += g;
                for i in 0..d.joint_dim {
                    out[l.w_am + i * d.vocab + v] += h[i] * g;
                    dh_enc[t * d.joint_dim + i] += self.params[l.w_am + i * d.vocab + v] * g;
                }
            }
        }

        // Encoder body.
        let wf = d.window * d.feature_dim;
        for t in 0..cache.frames {
            let h = &cache.h_enc[t * d.joint_dim..(t + 1) * d.joint_dim];
            let x = &cache.windows[t * wf..(t + 1) * wf];
            for i in 0..d.joint_dim {
                let dpre = dh_enc[t * d.joint_dim + i] * (1.0 - h[i] * h[i]);
                if dpre == 0.0 {
                    continue;
                }
                out[l.b_enc + i] += dpre;
                for (j, &xj) in x.iter().enumerate() {
                    if xj != 0.0 {
                        out[l.w_enc + j * d.joint_dim + i] += xj * dpre;
                    }
                }
            }
        }

        // Blank predictor (linear over the previous-token embedding).
        for p in 0..=d.vocab {
            let dp = &dh_pre[p * d.joint_dim..(p + 1) * d.joint_dim];
            if dp.iter().all(|&g| g == 0.0) {
                continue;
            }
            let emb = &self.params[l.emb_b + p * d.blank_embed..l.emb_b + (p + 1) * d.blank_embed];
            for i in 0..d.joint_dim {
                out[l.b_pb + i] += dp[i];
            }
            for e in 0..d.blank_embed {
                let w = &self.params[l.w_pb + e * d.joint_dim..l.w_pb + (e + 1) * d.joint_dim];
                let mut demb = 0.0;
                for i in 0..d.joint_dim {
                    out[l.w_pb + e * d.joint_dim + i] += emb[e] * dp[i];
                    demb += w[i] * dp[i];
                }
                out[l.emb_b + p * d.blank_embed + e] += demb;
            }
        }
    }
}

/// Decoder score source backed by one utterance's encoder cache. The
/// blank logit depends on the history only through its last token
/// (stateless blank predictor).
pub struct ModelScorer<'a> {
    cache: &'a EncoderCache,
}

impl<'a> ModelScorer<'a> {
    pub fn new(cache: &'a EncoderCache) -> Self {
        Self { cache }
    }
}

impl TransducerScorer for ModelScorer<'_> {
    fn frames(&self) -> usize {
        self.cache.frames
    }

    fn vocab(&self) -> usize {
        self.cache.dims.vocab
    }

    fn am_logits(&self, t: usize) -> &[f64] {
        self.cache.am_row(t)
    }

    fn blank_logit(&self, t: usize, history: &[usize]) -> f64 {
        self.cache.blank_logit(t, history.last().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{build_training_lattice, score_gradients_from_lattice};
    use crate::gradcheck::{central_differences, max_relative_error, DEFAULT_EPS, DEFAULT_FLOOR};
    use crate::ilm::{freeze, LmDims, ToyNeuralLm};
    use crate::lattice::{full_sum_loss, loss_gradients};
    use crate::rng::{self, stream};

    fn small_dims() -> FtDims {
        FtDims {
            feature_dim: 3,
            window: 3,
            joint_dim: 4,
            blank_embed: 3,
            vocab: 6,
        }
    }

    fn small_ilm() -> FrozenLm {
        let dims = LmDims {
            vocab: 6,
            context: 2,
            embed: 4,
            hidden: 5,
            boundary_token: 0,
        };
        freeze(ToyNeuralLm::random(dims, &mut stream(40, "ilm"), 0.3).unwrap())
    }

    fn random_features(frames: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, "feat");
        (0..frames)
            .map(|_| (0..dim).map(|_| rng::normal(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn param_count_matches_layout() {
        let d = small_dims();
        let model = ToyFtModel::zeros(d).unwrap();
        assert_eq!(model.params().len(), d.param_count());
        let l = Layout::of(&d);
        assert_eq!(l.end, d.param_count());
    }

    #[test]
    fn factorized_paths_are_independent() {
        let model = ToyFtModel::random(small_dims(), &mut stream(41, "init"), 0.2).unwrap();
        let ilm = small_ilm();
        let features = random_features(5, 3, 42);
        let cache = model.encode(&features);

        // Different targets: identical acoustic rows (no history leak).
        let s1 = model.assemble_scores(&cache, &ilm, &[1, 2]).unwrap();
        let s2 = model.assemble_scores(&cache, &ilm, &[3, 5]).unwrap();
        for t in 0..5 {
            assert_eq!(s1.am_row(t), s2.am_row(t));
        }

        // Different features: identical ILM rows (no acoustic leak).
        let other = model.encode(&random_features(5, 3, 43));
        let s3 = model.assemble_scores(&other, &ilm, &[1, 2]).unwrap();
        for u in 0..=2 {
            assert_eq!(s1.ilm_row(u), s3.ilm_row(u));
        }
    }

    #[test]
    fn scorer_agrees_with_assembled_tensor() {
        let model = ToyFtModel::random(small_dims(), &mut stream(44, "init"), 0.2).unwrap();
        let ilm = small_ilm();
        let features = random_features(4, 3, 45);
        let cache = model.encode(&features);
        let target = [2usize, 4];
        let scores = model.assemble_scores(&cache, &ilm, &target).unwrap();
        let scorer = ModelScorer::new(&cache);
        assert_eq!(scorer.frames(), 4);
        for t in 0..4 {
            assert_eq!(scorer.am_logits(t), scores.am_row(t));
            assert_eq!(scorer.blank_logit(t, &[]), scores.blank_logit(t, 0));
            assert_eq!(scorer.blank_logit(t, &target[..1]), scores.blank_logit(t, 1));
            assert_eq!(scorer.blank_logit(t, &target), scores.blank_logit(t, 2));
        }
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let dims = small_dims();
        let model = ToyFtModel::random(dims, &mut stream(46, "init"), 0.2).unwrap();
        let ilm = small_ilm();
        let features = random_features(6, 3, 47);
        let target = [1usize, 4];

        let loss_of = |params: &[f64]| -> f64 {
            let probe = ToyFtModel {
                dims,
                params: params.to_vec(),
            };
            let cache = probe.encode(&features);
            let scores = probe.assemble_scores(&cache, &ilm, &target).unwrap();
            let lattice = build_training_lattice(&scores, &target).unwrap();
            full_sum_loss(&lattice).unwrap()
        };

        let cache = model.encode(&features);
        let scores = model.assemble_scores(&cache, &ilm, &target).unwrap();
        let lattice = build_training_lattice(&scores, &target).unwrap();
        let cell_grads = loss_gradients(&lattice).unwrap();
        let score_grads =
            score_gradients_from_lattice(&scores, &target, 1.0, &cell_grads).unwrap();
        let mut analytic = vec![0.0; model.params().len()];
        model.accumulate_param_grads(&cache, &target, &score_grads, &mut analytic);

        let numeric = central_differences(loss_of, model.params(), DEFAULT_EPS);
        let err = max_relative_error(&analytic, &numeric, DEFAULT_FLOOR);
        assert!(err <= 1e-4, "max relative error {err}");
    }
}
