//! Explicit internal language model.
//!
//! The non-blank predictor of a factorized transducer is a standalone LM
//! over the label vocabulary. This module provides the scoring interface
//! the rest of the toolkit consumes, a small trainable reference LM with
//! manual gradients (a fixed-order feed-forward context model — exactly
//! finite-difference checkable), the per-token NLL loss used for text-only
//! pretraining, and freezing for the pretrain-then-fix recipe.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::log_softmax;
use crate::rng::{fnv1a64, normal};

#[derive(Debug, Error)]
pub enum IlmError {
    #[error("empty corpus: the loss is undefined")]
    EmptyCorpus,
    #[error("token id {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },
    #[error("unsupported operation: {0}")]
    UnsupportedOperation(&'static str),
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("checkpoint does not describe a {expected}: found kind {found:?}")]
    WrongKind { expected: &'static str, found: String },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint holds {got} parameters, dimensions require {want}")]
    ParamCountMismatch { got: usize, want: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Pluggable label-history scoring interface.
///
/// `logprobs` must return a valid log-distribution over the vocabulary for
/// every reachable state, and `advance` must be pure: it returns a fresh
/// state and never mutates the old one.
pub trait LanguageModel {
    type State: Clone;

    fn vocab(&self) -> usize;
    fn start_state(&self) -> Self::State;
    fn advance(&self, state: &Self::State, token: usize) -> Self::State;
    fn logprobs(&self, state: &Self::State) -> Vec<f64>;
}

/// Maximum-entropy LM; the reference point for loss sanity checks.
#[derive(Debug, Clone)]
pub struct UniformLm {
    pub vocab: usize,
}

impl LanguageModel for UniformLm {
    type State = ();

    fn vocab(&self) -> usize {
        self.vocab
    }

    fn start_state(&self) -> Self::State {}

    fn advance(&self, _state: &Self::State, _token: usize) -> Self::State {}

    fn logprobs(&self, _state: &Self::State) -> Vec<f64> {
        vec![-(self.vocab as f64).ln(); self.vocab]
    }
}

/// Dimensions of the reference LM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmDims {
    /// Vocabulary size, including the sentence-boundary token.
    pub vocab: usize,
    /// Context order: how many previous tokens condition the prediction.
    pub context: usize,
    /// Embedding width.
    pub embed: usize,
    /// Hidden width.
    pub hidden: usize,
    /// Token used to left-pad short histories; the sentence boundary.
    pub boundary_token: usize,
}

impl LmDims {
    pub fn param_count(&self) -> usize {
        self.vocab * self.embed
            + (self.context * self.embed) * self.hidden
            + self.hidden
            + self.hidden * self.vocab
            + self.vocab
    }

    fn validate(&self) -> Result<(), IlmError> {
        if self.vocab == 0 || self.context == 0 || self.embed == 0 || self.hidden == 0 {
            return Err(IlmError::InvalidDims(
                "vocab, context, embed and hidden must all be positive".into(),
            ));
        }
        if self.boundary_token >= self.vocab {
            return Err(IlmError::InvalidDims(format!(
                "boundary token {} outside vocabulary of {}",
                self.boundary_token, self.vocab
            )));
        }
        Ok(())
    }
}

/// Fixed-order feed-forward LM: the last `context` token embeddings are
/// concatenated, passed through one tanh hidden layer, and projected to
/// vocabulary logits. Parameters live in one flat buffer so finite
/// differences, SGD and checkpointing all see the same thing.
///
/// Layout: [embedding V×E | hidden (N·E)×H | hidden bias H | out H×V | out bias V].
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNeuralLm {
    dims: LmDims,
    params: Vec<f64>,
}

impl ToyNeuralLm {
    pub fn zeros(dims: LmDims) -> Result<Self, IlmError> {
        dims.validate()?;
        Ok(Self {
            params: vec![0.0; dims.param_count()],
            dims,
        })
    }

    /// Gaussian init with scale `sigma`, drawn from the caller's stream.
    pub fn random(dims: LmDims, rng: &mut impl RngCore, sigma: f64) -> Result<Self, IlmError> {
        let mut lm = Self::zeros(dims)?;
        for p in &mut lm.params {
            *p = sigma * normal(rng);
        }
        Ok(lm)
    }

    pub fn dims(&self) -> LmDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// FNV-1a over the raw parameter bits; used by freeze-integrity checks.
    pub fn params_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.to_bits().to_le_bytes());
        }
        fnv1a64(&bytes)
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let d = &self.dims;
        let emb_end = d.vocab * d.embed;
        let w1_end = emb_end + d.context * d.embed * d.hidden;
        let b1_end = w1_end + d.hidden;
        let w2_end = b1_end + d.hidden * d.vocab;
        (emb_end, w1_end, b1_end, w2_end)
    }

    /// Hidden pre-activation and tanh output for one context window.
    fn hidden(&self, context: &[usize]) -> Vec<f64> {
        let d = &self.dims;
        let (emb_end, w1_end, b1_end, _) = self.offsets();
        let w1 = &self.params[emb_end..w1_end];
        let b1 = &self.params[w1_end..b1_end];
        let mut h = b1.to_vec();
        for (slot, &tok) in context.iter().enumerate() {
            let emb = &self.params[tok * d.embed..(tok + 1) * d.embed];
            for (e, &x) in emb.iter().enumerate() {
                let j = slot * d.embed + e;
                let row = &w1[j * d.hidden..(j + 1) * d.hidden];
                for (i, &w) in row.iter().enumerate() {
                    h[i] += x * w;
                }
            }
        }
        for v in &mut h {
            *v = v.tanh();
        }
        h
    }

    fn logits_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        let d = &self.dims;
        let (_, _, b1_end, w2_end) = self.offsets();
        let w2 = &self.params[b1_end..w2_end];
        let b2 = &self.params[w2_end..];
        let mut logits = b2.to_vec();
        for (i, &hi) in h.iter().enumerate() {
            let row = &w2[i * d.vocab..(i + 1) * d.vocab];
            for (v, &w) in row.iter().enumerate() {
                logits[v] += hi * w;
            }
        }
        logits
    }

    fn context_logprobs(&self, context: &[usize]) -> Vec<f64> {
        log_softmax(&self.logits_from_hidden(&self.hidden(context)))
    }
}

impl LanguageModel for ToyNeuralLm {
    /// The last `context` tokens, oldest first, left-padded with the
    /// boundary token.
    type State = Vec<usize>;

    fn vocab(&self) -> usize {
        self.dims.vocab
    }

    fn start_state(&self) -> Self::State {
        vec![self.dims.boundary_token; self.dims.context]
    }

    fn advance(&self, state: &Self::State, token: usize) -> Self::State {
        let mut next = state.clone();
        next.rotate_left(1);
        *next.last_mut().expect("context order is positive") = token;
        next
    }

    fn logprobs(&self, state: &Self::State) -> Vec<f64> {
        self.context_logprobs(state)
    }
}

/// Mean negative log-likelihood per token over a corpus of token
/// sequences. Sequences are expected to end with the end-of-sentence
/// token so that sentence-final prediction is part of the loss.
pub fn ilm_loss<L: LanguageModel>(lm: &L, corpus: &[Vec<usize>]) -> Result<f64, IlmError> {
    let total_tokens: usize = corpus.iter().map(|s| s.len()).sum();
    if corpus.is_empty() || total_tokens == 0 {
        return Err(IlmError::EmptyCorpus);
    }
    let mut total = 0.0;
    for sentence in corpus {
        let mut state = lm.start_state();
        for &tok in sentence {
            if tok >= lm.vocab() {
                return Err(IlmError::TokenOutOfRange {
                    token: tok,
                    vocab: lm.vocab(),
                });
            }
            total -= lm.logprobs(&state)[tok];
            state = lm.advance(&state, tok);
        }
    }
    Ok(total / total_tokens as f64)
}

/// `exp` of the mean NLL.
pub fn perplexity<L: LanguageModel>(lm: &L, corpus: &[Vec<usize>]) -> Result<f64, IlmError> {
    ilm_loss(lm, corpus).map(f64::exp)
}

/// Mean NLL and its gradient w.r.t. every parameter, by manual reverse
/// accumulation through the feed-forward graph.
pub fn nll_gradients(lm: &ToyNeuralLm, corpus: &[Vec<usize>]) -> Result<(f64, Vec<f64>), IlmError> {
    let total_tokens: usize = corpus.iter().map(|s| s.len()).sum();
    if corpus.is_empty() || total_tokens == 0 {
        return Err(IlmError::EmptyCorpus);
    }
    let d = lm.dims;
    let (emb_end, w1_end, b1_end, w2_end) = lm.offsets();
    let scale = 1.0 / total_tokens as f64;

    let mut loss = 0.0;
    let mut grads = vec![0.0; lm.params.len()];
    for sentence in corpus {
        let mut context = vec![d.boundary_token; d.context];
        for &tok in sentence {
            if tok >= d.vocab {
                return Err(IlmError::TokenOutOfRange {
                    token: tok,
                    vocab: d.vocab,
                });
            }
            let h = lm.hidden(&context);
            let logits = lm.logits_from_hidden(&h);
            let lp = log_softmax(&logits);
            loss -= scale * lp[tok];

            // dlogits = scale · (softmax - onehot)
            let mut dlogits: Vec<f64> = lp.iter().map(|&l| scale * l.exp()).collect();
            dlogits[tok] -= scale;

            // Output layer.
            let w2 = &lm.params[b1_end..w2_end];
            let mut dh = vec![0.0; d.hidden];
            for i in 0..d.hidden {
                let row = &w2[i * d.vocab..(i + 1) * d.vocab];
                let grow = &mut grads[b1_end + i * d.vocab..b1_end + (i + 1) * d.vocab];
                let mut acc = 0.0;
                for v in 0..d.vocab {
                    grow[v] += h[i] * dlogits[v];
                    acc += row[v] * dlogits[v];
                }
                dh[i] = acc;
            }
            for v in 0..d.vocab {
                grads[w2_end + v] += dlogits[v];
            }

            // Hidden layer through tanh.
            let dpre: Vec<f64> = dh.iter().zip(&h).map(|(&g, &hv)| g * (1.0 - hv * hv)).collect();
            for (i, &g) in dpre.iter().enumerate() {
                grads[w1_end + i] += g;
            }
            let w1 = &lm.params[emb_end..w1_end];
            for (slot, &ctok) in context.iter().enumerate() {
                let emb = &lm.params[ctok * d.embed..(ctok + 1) * d.embed];
                for e in 0..d.embed {
                    let j = slot * d.embed + e;
                    let row = &w1[j * d.hidden..(j + 1) * d.hidden];
                    let mut dx = 0.0;
                    for i in 0..d.hidden {
                        grads[emb_end + j * d.hidden + i] += emb[e] * dpre[i];
                        dx += row[i] * dpre[i];
                    }
                    grads[ctok * d.embed + e] += dx;
                }
            }

            context.rotate_left(1);
            *context.last_mut().expect("context order is positive") = tok;
        }
    }
    Ok((loss, grads))
}

/// Text-only pretraining settings.
#[derive(Debug, Clone, Copy)]
pub struct PretrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Classical momentum; 0 disables it.
    pub momentum: f64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        Self {
            steps: 400,
            learning_rate: 0.5,
            momentum: 0.9,
        }
    }
}

/// Full-batch SGD (optionally with momentum) on the mean NLL. Returns the
/// loss measured at the start of each step; with `steps == 0` the model is
/// untouched and the curve is empty.
pub fn pretrain(
    lm: &mut ToyNeuralLm,
    corpus: &[Vec<usize>],
    opts: PretrainOptions,
) -> Result<Vec<f64>, IlmError> {
    let mut curve = Vec::with_capacity(opts.steps);
    let mut velocity = vec![0.0; lm.params.len()];
    for step in 0..opts.steps {
        let (loss, grads) = nll_gradients(lm, corpus)?;
        if !loss.is_finite() {
            return Err(IlmError::NonFiniteLoss { step });
        }
        curve.push(loss);
        for ((p, v), g) in lm.params.iter_mut().zip(&mut velocity).zip(&grads) {
            *v = opts.momentum * *v - opts.learning_rate * g;
            *p += *v;
        }
    }
    Ok(curve)
}

/// Read-only handle over a trained LM. Training code paths accept only
/// `FrozenLm`, which has no parameter mutators, so "the ILM is fixed" is a
/// type-level fact rather than a convention.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLm {
    inner: ToyNeuralLm,
}

/// Consumes a trained LM and returns the frozen scoring handle.
pub fn freeze(lm: ToyNeuralLm) -> FrozenLm {
    FrozenLm { inner: lm }
}

impl FrozenLm {
    pub fn dims(&self) -> LmDims {
        self.inner.dims
    }

    pub fn params_hash(&self) -> u64 {
        self.inner.params_hash()
    }

    /// Unfreezing is not part of the recipe.
    pub fn thaw(self) -> Result<ToyNeuralLm, IlmError> {
        Err(IlmError::UnsupportedOperation(
            "a frozen LM cannot be thawed; reload the pre-freeze checkpoint instead",
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), IlmError> {
        save_lm_checkpoint(&self.inner, path)
    }
}

impl LanguageModel for FrozenLm {
    type State = <ToyNeuralLm as LanguageModel>::State;

    fn vocab(&self) -> usize {
        self.inner.vocab()
    }

    fn start_state(&self) -> Self::State {
        self.inner.start_state()
    }

    fn advance(&self, state: &Self::State, token: usize) -> Self::State {
        self.inner.advance(state, token)
    }

    fn logprobs(&self, state: &Self::State) -> Vec<f64> {
        self.inner.logprobs(state)
    }
}

pub const LM_CHECKPOINT_KIND: &str = "toy_neural_lm";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON container for LM parameters. JSON numbers are emitted in
/// shortest-round-trip form, so finite f64 values survive bit-exactly.
#[derive(Debug, Serialize, Deserialize)]
struct LmCheckpoint {
    version: u32,
    kind: String,
    dims: LmDims,
    params: Vec<f64>,
}

pub fn save_lm_checkpoint(lm: &ToyNeuralLm, path: &Path) -> Result<(), IlmError> {
    let ckpt = LmCheckpoint {
        version: CHECKPOINT_VERSION,
        kind: LM_CHECKPOINT_KIND.to_string(),
        dims: lm.dims,
        params: lm.params.clone(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(BufWriter::new(file), &ckpt)?;
    Ok(())
}

pub fn load_lm_checkpoint(path: &Path) -> Result<ToyNeuralLm, IlmError> {
    let file = std::fs::File::open(path)?;
    let ckpt: LmCheckpoint = serde_json::from_reader(BufReader::new(file))?;
    if ckpt.kind != LM_CHECKPOINT_KIND {
        return Err(IlmError::WrongKind {
            expected: LM_CHECKPOINT_KIND,
            found: ckpt.kind,
        });
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(IlmError::UnsupportedVersion(ckpt.version));
    }
    ckpt.dims.validate()?;
    if ckpt.params.len() != ckpt.dims.param_count() {
        return Err(IlmError::ParamCountMismatch {
            got: ckpt.params.len(),
            want: ckpt.dims.param_count(),
        });
    }
    Ok(ToyNeuralLm {
        dims: ckpt.dims,
        params: ckpt.params,
    })
}

/// Loads a checkpoint directly into a frozen handle.
pub fn load_frozen_lm(path: &Path) -> Result<FrozenLm, IlmError> {
    Ok(freeze(load_lm_checkpoint(path)?))
}
