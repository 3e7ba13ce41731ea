//! Frame-synchronous transducer beam search with ILM fusion.
//!
//! Per frame, every live hypothesis may emit up to `max_symbols_per_frame`
//! labels and then a blank that advances to the next frame. Hypotheses with
//! identical token sequences are merged: the reported score is the
//! log-add-exp of the merged path masses, while the stored alignment is the
//! one of the highest-probability single path (Viterbi), which sequence
//! training later needs as a band center.
//!
//! Label scores come from the factorization module's fused rule — α inside
//! the non-blank softmax, β·log P_ilm outside — or, in baseline mode, from
//! the training-normalized score plus weighted external-LM and ILM terms
//! (ILM subtraction being a negative ILM weight).
//!
//! Ties are broken by higher Viterbi score, then lexicographic token
//! order, so N-best lists are reproducible bit for bit.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factorization::{
    blank_logprob, nonblank_decode_scores, nonblank_train_logprobs, FactorizationError,
    FactorizedScores, FusionWeights,
};
use crate::ilm::{LanguageModel, UniformLm};
use crate::math::log_add_exp;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("empty input: zero frames")]
    EmptyInput,
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
    #[error("exhaustive search refused: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
}

/// Per-frame score source for decoding: acoustic logits per frame and the
/// blank joiner logit given the emitted-token history.
pub trait TransducerScorer {
    fn frames(&self) -> usize;
    fn vocab(&self) -> usize;
    /// Acoustic logits (pre-log-softmax) for frame `t`.
    fn am_logits(&self, t: usize) -> &[f64];
    /// Blank joiner logit at frame `t` after emitting `history`.
    fn blank_logit(&self, t: usize, history: &[usize]) -> f64;
    /// Hard cap on label emissions, if the score source has one
    /// (a precomputed tensor runs out of history rows).
    fn max_emissions(&self) -> Option<usize> {
        None
    }
}

/// Scorer view over a precomputed [`FactorizedScores`] tensor; the blank
/// logit depends on the history only through its length, matching the
/// tensor's (t, u) cells.
pub struct TensorScorer<'a> {
    scores: &'a FactorizedScores,
}

impl<'a> TensorScorer<'a> {
    pub fn new(scores: &'a FactorizedScores) -> Self {
        Self { scores }
    }
}

impl TransducerScorer for TensorScorer<'_> {
    fn frames(&self) -> usize {
        self.scores.frames()
    }

    fn vocab(&self) -> usize {
        self.scores.vocab()
    }

    fn am_logits(&self, t: usize) -> &[f64] {
        self.scores.am_row(t)
    }

    fn blank_logit(&self, t: usize, history: &[usize]) -> f64 {
        self.scores.blank_logit(t, history.len())
    }

    fn max_emissions(&self) -> Option<usize> {
        Some(self.scores.histories() - 1)
    }
}

/// History-position LM over a [`FactorizedScores`] tensor's ILM rows: the
/// distribution depends only on how many tokens were emitted. Useful for
/// driving the decoder from a fixed tensor in tests and oracles.
pub struct TensorLm<'a> {
    scores: &'a FactorizedScores,
}

impl<'a> TensorLm<'a> {
    pub fn new(scores: &'a FactorizedScores) -> Self {
        Self { scores }
    }
}

impl LanguageModel for TensorLm<'_> {
    type State = usize;

    fn vocab(&self) -> usize {
        self.scores.vocab()
    }

    fn start_state(&self) -> usize {
        0
    }

    fn advance(&self, state: &usize, _token: usize) -> usize {
        // Saturate at the last row; the scorer's emission cap stops the
        // search before the row would be read.
        (state + 1).min(self.scores.histories() - 1)
    }

    fn logprobs(&self, state: &usize) -> Vec<f64> {
        crate::math::log_softmax(self.scores.ilm_row(*state))
    }
}

/// Search variant: the proposed fused decode or the shallow-fusion
/// baseline with ILM subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    Factorized,
    BaselineShallowFusion,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub weights: FusionWeights,
    pub length_norm: bool,
    pub max_symbols_per_frame: usize,
    pub mode: DecodeMode,
    /// External LM weight, baseline mode only.
    pub ext_lm_weight: f64,
    /// ILM weight, baseline mode only; negative subtracts.
    pub ilm_subtract_weight: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            weights: FusionWeights::production(),
            length_norm: true,
            max_symbols_per_frame: 5,
            mode: DecodeMode::Factorized,
            ext_lm_weight: 0.6,
            ilm_subtract_weight: -0.2,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_size == 0 {
            return Err(DecodeError::InvalidConfig("beam_size must be >= 1".into()));
        }
        if self.max_symbols_per_frame == 0 {
            return Err(DecodeError::InvalidConfig(
                "max_symbols_per_frame must be >= 1".into(),
            ));
        }
        if !self.ext_lm_weight.is_finite() || !self.ilm_subtract_weight.is_finite() {
            return Err(DecodeError::InvalidConfig(
                "fusion weights must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// A completed decode hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    /// Merged (log-add-exp) score over all alignments the beam kept;
    /// length-normalized iff the config asked for it.
    pub score: f64,
    /// Emission frame of each token on the best single path.
    pub viterbi_alignment: Vec<usize>,
    /// Score of that best single path (same normalization as `score`).
    pub viterbi_score: f64,
    /// Σ_u log P_ilm of the emitted tokens (raw, unscaled).
    pub ilm_logprob_sum: f64,
}

/// `score / max(1, token_count)`.
pub fn length_normalize(score: f64, token_count: usize) -> f64 {
    score / token_count.max(1) as f64
}

/// Baseline fusion rule: `base + λ_ext·ext_lm_lp + λ_ilm·ilm_lp`.
pub fn shallow_fusion_score(
    base_score: f64,
    ext_lm_lp: f64,
    ilm_lp: f64,
    ext_weight: f64,
    ilm_weight: f64,
) -> f64 {
    base_score + ext_weight * ext_lm_lp + ilm_weight * ilm_lp
}

struct BeamItem<LS, ES> {
    score: f64,
    viterbi_score: f64,
    alignment: Vec<usize>,
    ilm_sum: f64,
    lm_state: LS,
    /// Cached `ilm.logprobs(lm_state)`.
    ilm_lp: Vec<f64>,
    ext_state: Option<ES>,
    ext_lp: Option<Vec<f64>>,
}

impl<LS: Clone, ES: Clone> Clone for BeamItem<LS, ES> {
    fn clone(&self) -> Self {
        Self {
            score: self.score,
            viterbi_score: self.viterbi_score,
            alignment: self.alignment.clone(),
            ilm_sum: self.ilm_sum,
            lm_state: self.lm_state.clone(),
            ilm_lp: self.ilm_lp.clone(),
            ext_state: self.ext_state.clone(),
            ext_lp: self.ext_lp.clone(),
        }
    }
}

type Beam<LS, ES> = BTreeMap<Vec<usize>, BeamItem<LS, ES>>;

/// Same token sequence ⇒ same LM states and ILM sum; merge path mass by
/// log-add-exp and keep the better path's alignment.
fn merge_into<LS: Clone, ES: Clone>(beam: &mut Beam<LS, ES>, tokens: Vec<usize>, item: BeamItem<LS, ES>) {
    match beam.entry(tokens) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert(item);
        }
        std::collections::btree_map::Entry::Occupied(mut o) => {
            let held = o.get_mut();
            held.score = log_add_exp(held.score, item.score);
            if item.viterbi_score > held.viterbi_score {
                held.viterbi_score = item.viterbi_score;
                held.alignment = item.alignment;
            }
        }
    }
}

fn prune<LS: Clone, ES: Clone>(beam: Beam<LS, ES>, beam_size: usize) -> Beam<LS, ES> {
    if beam.len() <= beam_size {
        return beam;
    }
    let mut items: Vec<(Vec<usize>, BeamItem<LS, ES>)> = beam.into_iter().collect();
    items.sort_by(|a, b| {
        b.1.score
            .total_cmp(&a.1.score)
            .then_with(|| b.1.viterbi_score.total_cmp(&a.1.viterbi_score))
            .then_with(|| a.0.cmp(&b.0))
    });
    items.truncate(beam_size);
    items.into_iter().collect()
}

/// Per-token label scores for one (frame, hypothesis) pair under the
/// configured rule.
fn label_scores(
    am: &[f64],
    ilm_lp: &[f64],
    ext_lp: Option<&[f64]>,
    blank_logit: f64,
    cfg: &DecodeConfig,
) -> Result<Vec<f64>, DecodeError> {
    match cfg.mode {
        DecodeMode::Factorized => {
            Ok(nonblank_decode_scores(am, ilm_lp, blank_logit, cfg.weights)?)
        }
        DecodeMode::BaselineShallowFusion => {
            let base = nonblank_train_logprobs(am, ilm_lp, blank_logit)?;
            let ext = ext_lp.ok_or_else(|| {
                DecodeError::InvalidConfig(
                    "baseline shallow fusion requires an external LM".into(),
                )
            })?;
            Ok(base
                .iter()
                .zip(ilm_lp)
                .zip(ext)
                .map(|((&b, &i), &e)| {
                    shallow_fusion_score(b, e, i, cfg.ext_lm_weight, cfg.ilm_subtract_weight)
                })
                .collect())
        }
    }
}

/// Fused-mode beam search. For the shallow-fusion baseline use
/// [`beam_search_with_ext_lm`].
pub fn beam_search<S, L>(
    scorer: &S,
    ilm: &L,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError>
where
    S: TransducerScorer,
    L: LanguageModel,
{
    if cfg.mode == DecodeMode::BaselineShallowFusion {
        return Err(DecodeError::InvalidConfig(
            "baseline shallow fusion requires an external LM; call beam_search_with_ext_lm".into(),
        ));
    }
    search(scorer, ilm, None::<&UniformLm>, cfg)
}

/// Beam search with an external LM attached (baseline mode; the external
/// scores are ignored in factorized mode).
pub fn beam_search_with_ext_lm<S, L, E>(
    scorer: &S,
    ilm: &L,
    ext_lm: &E,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError>
where
    S: TransducerScorer,
    L: LanguageModel,
    E: LanguageModel,
{
    search(scorer, ilm, Some(ext_lm), cfg)
}

fn search<S, L, E>(
    scorer: &S,
    ilm: &L,
    ext_lm: Option<&E>,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError>
where
    S: TransducerScorer,
    L: LanguageModel,
    E: LanguageModel,
{
    cfg.validate()?;
    if scorer.frames() == 0 {
        return Err(DecodeError::EmptyInput);
    }
    let vocab = scorer.vocab();
    let cap = scorer.max_emissions();

    let start = BeamItem {
        score: 0.0,
        viterbi_score: 0.0,
        alignment: Vec::new(),
        ilm_sum: 0.0,
        lm_state: ilm.start_state(),
        ilm_lp: ilm.logprobs(&ilm.start_state()),
        ext_state: ext_lm.map(|e| e.start_state()),
        ext_lp: ext_lm.map(|e| e.logprobs(&e.start_state())),
    };
    let mut beam: Beam<L::State, E::State> = BTreeMap::new();
    beam.insert(Vec::new(), start);

    for t in 0..scorer.frames() {
        let mut frame_done: Beam<L::State, E::State> = BTreeMap::new();
        let mut active = beam;
        for round in 0..=cfg.max_symbols_per_frame {
            // Blank: consume the frame.
            for (tokens, item) in &active {
                let (log_pb, _) = blank_logprob(scorer.blank_logit(t, tokens))?;
                let mut advanced = item.clone();
                advanced.score += log_pb;
                advanced.viterbi_score += log_pb;
                merge_into(&mut frame_done, tokens.clone(), advanced);
            }
            if round == cfg.max_symbols_per_frame {
                break;
            }
            // Labels: stay on the frame.
            let mut expanded: Beam<L::State, E::State> = BTreeMap::new();
            for (tokens, item) in &active {
                if cap.is_some_and(|c| tokens.len() >= c) {
                    continue;
                }
                let blank_logit = scorer.blank_logit(t, tokens);
                let scores = label_scores(
                    scorer.am_logits(t),
                    &item.ilm_lp,
                    item.ext_lp.as_deref(),
                    blank_logit,
                    cfg,
                )?;
                for (k, &s) in scores.iter().enumerate().take(vocab) {
                    let mut tokens_k = tokens.clone();
                    tokens_k.push(k);
                    let lm_state = ilm.advance(&item.lm_state, k);
                    let ext_state = match (&item.ext_state, ext_lm) {
                        (Some(st), Some(e)) => Some(e.advance(st, k)),
                        _ => None,
                    };
                    let mut alignment = item.alignment.clone();
                    alignment.push(t);
                    let next = BeamItem {
                        score: item.score + s,
                        viterbi_score: item.viterbi_score + s,
                        alignment,
                        ilm_sum: item.ilm_sum + item.ilm_lp[k],
                        ilm_lp: ilm.logprobs(&lm_state),
                        lm_state,
                        ext_lp: match (&ext_state, ext_lm) {
                            (Some(st), Some(e)) => Some(e.logprobs(st)),
                            _ => None,
                        },
                        ext_state,
                    };
                    merge_into(&mut expanded, tokens_k, next);
                }
            }
            active = prune(expanded, cfg.beam_size);
            if active.is_empty() {
                break;
            }
        }
        beam = prune(frame_done, cfg.beam_size);
    }

    let mut ranked: Vec<Hypothesis> = beam
        .into_iter()
        .map(|(tokens, item)| {
            let (score, viterbi_score) = if cfg.length_norm {
                (
                    length_normalize(item.score, tokens.len()),
                    length_normalize(item.viterbi_score, tokens.len()),
                )
            } else {
                (item.score, item.viterbi_score)
            };
            Hypothesis {
                tokens,
                score,
                viterbi_alignment: item.alignment,
                viterbi_score,
                ilm_logprob_sum: item.ilm_sum,
            }
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked.truncate(cfg.beam_size);
    Ok(ranked)
}

fn rank_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.viterbi_score.total_cmp(&a.viterbi_score))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Exhaustive decoding oracle: enumerates every label/blank path (within
/// the same per-frame emission cap), merges by token sequence, and ranks
/// with the identical scoring rule and tie-break. Independent of the beam
/// search mechanics; only usable on tiny instances.
pub fn exhaustive_search<S, L, E>(
    scorer: &S,
    ilm: &L,
    ext_lm: Option<&E>,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError>
where
    S: TransducerScorer,
    L: LanguageModel,
    E: LanguageModel,
{
    cfg.validate()?;
    if scorer.frames() == 0 {
        return Err(DecodeError::EmptyInput);
    }
    let vocab = scorer.vocab() as f64;
    let per_frame: f64 = (0..=cfg.max_symbols_per_frame)
        .map(|e| vocab.powi(e as i32))
        .sum();
    let bound = per_frame.powi(scorer.frames() as i32);
    if !(bound <= 1e7) {
        return Err(DecodeError::TooLarge(format!(
            "about {bound:.1e} paths; exhaustive search is for tiny instances"
        )));
    }

    struct Merged {
        score: f64,
        viterbi_score: f64,
        alignment: Vec<usize>,
        ilm_sum: f64,
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<S, L, E>(
        scorer: &S,
        ilm: &L,
        ext_lm: Option<&E>,
        cfg: &DecodeConfig,
        t: usize,
        emitted_this_frame: usize,
        tokens: &mut Vec<usize>,
        alignment: &mut Vec<usize>,
        acc: f64,
        ilm_sum: f64,
        lm_state: &L::State,
        ext_state: Option<&E::State>,
        out: &mut BTreeMap<Vec<usize>, Merged>,
    ) -> Result<(), DecodeError>
    where
        S: TransducerScorer,
        L: LanguageModel,
        E: LanguageModel,
    {
        if t == scorer.frames() {
            match out.entry(tokens.clone()) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(Merged {
                        score: acc,
                        viterbi_score: acc,
                        alignment: alignment.clone(),
                        ilm_sum,
                    });
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    let m = o.get_mut();
                    m.score = log_add_exp(m.score, acc);
                    if acc > m.viterbi_score {
                        m.viterbi_score = acc;
                        m.alignment = alignment.clone();
                    }
                }
            }
            return Ok(());
        }
        let blank_logit = scorer.blank_logit(t, tokens);
        let (log_pb, _) = blank_logprob(blank_logit)?;
        recurse(
            scorer,
            ilm,
            ext_lm,
            cfg,
            t + 1,
            0,
            tokens,
            alignment,
            acc + log_pb,
            ilm_sum,
            lm_state,
            ext_state,
            out,
        )?;
        let capped = scorer.max_emissions().is_some_and(|c| tokens.len() >= c);
        if emitted_this_frame < cfg.max_symbols_per_frame && !capped {
            let ilm_lp = ilm.logprobs(lm_state);
            let ext_lp = match (ext_lm, ext_state) {
                (Some(e), Some(st)) => Some(e.logprobs(st)),
                _ => None,
            };
            let scores = label_scores(
                scorer.am_logits(t),
                &ilm_lp,
                ext_lp.as_deref(),
                blank_logit,
                cfg,
            )?;
            for (k, &s) in scores.iter().enumerate() {
                tokens.push(k);
                alignment.push(t);
                let next_lm = ilm.advance(lm_state, k);
                let next_ext = match (ext_lm, ext_state) {
                    (Some(e), Some(st)) => Some(e.advance(st, k)),
                    _ => None,
                };
                recurse(
                    scorer,
                    ilm,
                    ext_lm,
                    cfg,
                    t,
                    emitted_this_frame + 1,
                    tokens,
                    alignment,
                    acc + s,
                    ilm_sum + ilm_lp[k],
                    &next_lm,
                    next_ext.as_ref(),
                    out,
                )?;
                tokens.pop();
                alignment.pop();
            }
        }
        Ok(())
    }

    let mut merged: BTreeMap<Vec<usize>, Merged> = BTreeMap::new();
    let lm_start = ilm.start_state();
    let ext_start = ext_lm.map(|e| e.start_state());
    recurse(
        scorer,
        ilm,
        ext_lm,
        cfg,
        0,
        0,
        &mut Vec::new(),
        &mut Vec::new(),
        0.0,
        0.0,
        &lm_start,
        ext_start.as_ref(),
        &mut merged,
    )?;

    let mut ranked: Vec<Hypothesis> = merged
        .into_iter()
        .map(|(tokens, m)| {
            let (score, viterbi_score) = if cfg.length_norm {
                (
                    length_normalize(m.score, tokens.len()),
                    length_normalize(m.viterbi_score, tokens.len()),
                )
            } else {
                (m.score, m.viterbi_score)
            };
            Hypothesis {
                tokens,
                score,
                viterbi_alignment: m.alignment,
                viterbi_score,
                ilm_logprob_sum: m.ilm_sum,
            }
        })
        .collect();
    ranked.sort_by(rank_order);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::build_training_lattice;
    use crate::lattice::full_sum_loss;
    use crate::rng::{self, stream};

    fn random_scores(frames: usize, histories: usize, vocab: usize, seed: u64) -> FactorizedScores {
        let mut rng = stream(seed, "decode-scores");
        let mut logits = |n: usize| -> Vec<f64> {
            (0..n).map(|_| 4.0 * rng::uniform(&mut rng) - 2.0).collect()
        };
        let am = logits(frames * vocab);
        let ilm = logits(histories * vocab);
        let blank = logits(frames * histories);
        FactorizedScores::new(frames, histories, vocab, am, ilm, blank).unwrap()
    }

    /// First `histories` rows of a tensor, for building lattices of
    /// shorter targets than the tensor was sized for.
    fn truncate_histories(scores: &FactorizedScores, histories: usize) -> FactorizedScores {
        let v = scores.vocab();
        let mut ilm = Vec::with_capacity(histories * v);
        for u in 0..histories {
            ilm.extend_from_slice(scores.ilm_row(u));
        }
        let mut blank = Vec::with_capacity(scores.frames() * histories);
        for t in 0..scores.frames() {
            for u in 0..histories {
                blank.push(scores.blank_logit(t, u));
            }
        }
        let mut am = Vec::with_capacity(scores.frames() * v);
        for t in 0..scores.frames() {
            am.extend_from_slice(scores.am_row(t));
        }
        FactorizedScores::new(scores.frames(), histories, v, am, ilm, blank).unwrap()
    }

    fn cfg(alpha: f64, beta: f64, beam: usize, length_norm: bool) -> DecodeConfig {
        DecodeConfig {
            beam_size: beam,
            weights: FusionWeights::new(alpha, beta).unwrap(),
            length_norm,
            max_symbols_per_frame: 5,
            mode: DecodeMode::Factorized,
            ..DecodeConfig::default()
        }
    }

    #[test]
    fn strong_blank_yields_empty_top1() {
        let v = 2;
        let scores = FactorizedScores::new(
            1,
            1,
            v,
            vec![0.0; v],
            vec![0.0; v],
            vec![6.0], // blank heavily favored
        )
        .unwrap();
        let scorer = TensorScorer::new(&scores);
        let lm = TensorLm::new(&scores);
        let nbest = beam_search(&scorer, &lm, &cfg(1.0, 0.0, 4, false)).unwrap();
        assert!(nbest[0].tokens.is_empty());
        let (log_pb, _) = blank_logprob(6.0).unwrap();
        assert_eq!(nbest[0].score.to_bits(), log_pb.to_bits());
        assert!(nbest[0].viterbi_alignment.is_empty());
    }

    #[test]
    fn zero_frames_is_an_error() {
        struct NoFrames;
        impl TransducerScorer for NoFrames {
            fn frames(&self) -> usize {
                0
            }
            fn vocab(&self) -> usize {
                2
            }
            fn am_logits(&self, _t: usize) -> &[f64] {
                &[]
            }
            fn blank_logit(&self, _t: usize, _h: &[usize]) -> f64 {
                0.0
            }
        }
        let lm = UniformLm { vocab: 2 };
        assert!(matches!(
            beam_search(&NoFrames, &lm, &cfg(1.0, 0.0, 2, false)),
            Err(DecodeError::EmptyInput)
        ));
    }

    #[test]
    fn saturated_beam_matches_exhaustive_oracle() {
        for (seed, frames, vocab) in [(1u64, 3usize, 2usize), (2, 4, 3), (3, 2, 3), (4, 4, 2)] {
            let scores = random_scores(frames, 3, vocab, seed);
            let scorer = TensorScorer::new(&scores);
            let lm = TensorLm::new(&scores);
            for (alpha, beta) in [(1.0, 0.0), (0.6, 0.6), (1.0, 0.2)] {
                for length_norm in [false, true] {
                    let mut c = cfg(alpha, beta, 64, length_norm);
                    c.max_symbols_per_frame = 2;
                    let beam = beam_search(&scorer, &lm, &c).unwrap();
                    let oracle =
                        exhaustive_search(&scorer, &lm, None::<&UniformLm>, &c).unwrap();
                    assert_eq!(
                        beam[0].tokens, oracle[0].tokens,
                        "seed {seed} α={alpha} β={beta} ln={length_norm}"
                    );
                    assert!(
                        (beam[0].score - oracle[0].score).abs() < 1e-9,
                        "scores {} vs {}",
                        beam[0].score,
                        oracle[0].score
                    );
                }
            }
        }
    }

    #[test]
    fn wide_beam_scores_match_lattice_full_sum() {
        // With (α=1, β=0), no length norm and no pruning, a hypothesis's
        // merged score is the full-sum mass of that token sequence.
        let scores = random_scores(3, 3, 3, 9);
        let scorer = TensorScorer::new(&scores);
        let lm = TensorLm::new(&scores);
        let nbest = beam_search(&scorer, &lm, &cfg(1.0, 0.0, 1024, false)).unwrap();
        assert!(!nbest.is_empty());
        let mut checked = 0;
        for hyp in &nbest {
            let sub = truncate_histories(&scores, hyp.tokens.len() + 1);
            let lat = build_training_lattice(&sub, &hyp.tokens).unwrap();
            let loss = full_sum_loss(&lat).unwrap();
            assert!(
                (hyp.score + loss).abs() < 1e-9,
                "tokens {:?}: beam {} vs lattice {}",
                hyp.tokens,
                hyp.score,
                -loss
            );
            checked += 1;
        }
        assert!(checked >= 3, "expected several hypotheses, got {checked}");
    }

    #[test]
    fn merged_score_dominates_viterbi_and_alignments_are_sane() {
        for seed in 0..10u64 {
            let scores = random_scores(4, 4, 3, 100 + seed);
            let scorer = TensorScorer::new(&scores);
            let lm = TensorLm::new(&scores);
            let nbest = beam_search(&scorer, &lm, &cfg(1.0, 0.0, 8, false)).unwrap();
            for hyp in &nbest {
                assert!(hyp.score >= hyp.viterbi_score - 1e-12);
                assert_eq!(hyp.viterbi_alignment.len(), hyp.tokens.len());
                for pair in hyp.viterbi_alignment.windows(2) {
                    assert!(pair[0] <= pair[1], "alignment must be non-decreasing");
                }
                if let Some(&last) = hyp.viterbi_alignment.last() {
                    assert!(last < 4);
                }
            }
            // No duplicate token sequences.
            for i in 1..nbest.len() {
                assert_ne!(nbest[i - 1].tokens, nbest[i].tokens);
            }
        }
    }

    #[test]
    fn decoding_is_deterministic() {
        let scores = random_scores(4, 3, 3, 21);
        let scorer = TensorScorer::new(&scores);
        let lm = TensorLm::new(&scores);
        let a = beam_search(&scorer, &lm, &cfg(0.6, 0.6, 5, true)).unwrap();
        let b = beam_search(&scorer, &lm, &cfg(0.6, 0.6, 5, true)).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.tokens, y.tokens);
            assert_eq!(x.score.to_bits(), y.score.to_bits());
            assert_eq!(x.viterbi_alignment, y.viterbi_alignment);
        }
    }

    #[test]
    fn exact_ties_rank_lexicographically() {
        // Fully uniform tensor: same-length hypotheses tie exactly.
        let v = 2;
        let scores = FactorizedScores::new(
            2,
            3,
            v,
            vec![0.0; 2 * v],
            vec![0.0; 3 * v],
            vec![0.0; 2 * 3],
        )
        .unwrap();
        let scorer = TensorScorer::new(&scores);
        let lm = TensorLm::new(&scores);
        let nbest = beam_search(&scorer, &lm, &cfg(1.0, 0.0, 16, false)).unwrap();
        let mut prev: Option<&Hypothesis> = None;
        for hyp in &nbest {
            if let Some(p) = prev {
                if p.score.to_bits() == hyp.score.to_bits()
                    && p.viterbi_score.to_bits() == hyp.viterbi_score.to_bits()
                {
                    assert!(p.tokens < hyp.tokens, "ties must sort lexicographically");
                }
            }
            prev = Some(hyp);
        }
    }

    #[test]
    fn length_normalize_basics_and_flip() {
        assert_eq!(length_normalize(-10.0, 5), -2.0);
        assert_eq!(length_normalize(-10.0, 0), -10.0);
        // Brute-force a genuine ranking flip over a small grid.
        let mut flip = None;
        'outer: for (sa, la) in [(-10.0, 10usize), (-8.0, 8), (-9.0, 9)] {
            for (sb, lb) in [(-6.0, 3usize), (-5.0, 2), (-7.0, 4)] {
                let unnorm_prefers_b = sb > sa;
                let norm_prefers_a = length_normalize(sa, la) > length_normalize(sb, lb);
                if unnorm_prefers_b && norm_prefers_a {
                    flip = Some(((sa, la), (sb, lb)));
                    break 'outer;
                }
            }
        }
        let ((sa, la), (sb, lb)) = flip.expect("a ranking flip pair must exist");
        assert!(sb > sa && length_normalize(sa, la) > length_normalize(sb, lb));
    }

    #[test]
    fn shallow_fusion_is_affine_identity_at_zero() {
        assert_eq!(shallow_fusion_score(-3.0, -1.0, -2.0, 0.0, 0.0), -3.0);
        let mut rng = stream(5, "sf");
        for _ in 0..50 {
            let b = -5.0 * rng::uniform(&mut rng);
            let e = -5.0 * rng::uniform(&mut rng);
            let i = -5.0 * rng::uniform(&mut rng);
            let le = rng::uniform(&mut rng);
            let li = -rng::uniform(&mut rng);
            let base = shallow_fusion_score(b, e, i, le, li);
            // affine in each argument
            assert!((shallow_fusion_score(b + 1.0, e, i, le, li) - base - 1.0).abs() < 1e-12);
            assert!((shallow_fusion_score(b, e + 1.0, i, le, li) - base - le).abs() < 1e-12);
            assert!((shallow_fusion_score(b, e, i + 1.0, le, li) - base - li).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_mode_needs_external_lm_and_matches_its_oracle() {
        let scores = random_scores(3, 3, 3, 33);
        let scorer = TensorScorer::new(&scores);
        let lm = TensorLm::new(&scores);
        let mut c = cfg(1.0, 0.0, 64, false);
        c.mode = DecodeMode::BaselineShallowFusion;
        c.max_symbols_per_frame = 2;
        assert!(matches!(
            beam_search(&scorer, &lm, &c),
            Err(DecodeError::InvalidConfig(_))
        ));
        let ext = UniformLm { vocab: 3 };
        let beam = beam_search_with_ext_lm(&scorer, &lm, &ext, &c).unwrap();
        let oracle = exhaustive_search(&scorer, &lm, Some(&ext), &c).unwrap();
        assert_eq!(beam[0].tokens, oracle[0].tokens);
        assert!((beam[0].score - oracle[0].score).abs() < 1e-9);
    }
}
