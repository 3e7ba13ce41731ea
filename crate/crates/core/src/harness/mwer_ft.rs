//! ILM-fusion-aware MWER finetuning.
//!
//! Per batch and utterance: beam-decode an N-best with the tuned fusion
//! weights (no length normalization — the loss scores are unnormalized),
//! band each hypothesis's lattice around its Viterbi alignment, score it
//! with the restricted full-sum built at the decode-time α, and descend
//! the expected word-error loss plus a small ground-truth-banded
//! transducer term that keeps emission times anchored.

use super::data::{ToyCorpus, Utterance};
use super::eval::{evaluate, EvalReport};
use super::model::{ModelScorer, ToyFtModel};
use super::{HarnessError, RunConfig};
use crate::decode::{beam_search, DecodeConfig, DecodeMode};
use crate::factorization::{
    build_fused_lattice, build_training_lattice, score_gradients_from_lattice, FusionWeights,
};
use crate::ilm::FrozenLm;
use crate::lattice::LatticeGradients;
use crate::lattice::{restricted_full_sum_loss, restricted_loss_gradients};
use crate::mwer::{
    band_from_alignment, combined_loss, mwer_gradients, mwer_loss, word_edit_distance, BandConfig,
    NBestItem,
};
use crate::rng::{index, stream};

#[derive(Debug, Clone)]
pub struct MwerReport {
    /// Mean combined loss per step.
    pub batch_losses: Vec<f64>,
    /// Per scored utterance: (MWER loss, min R, max R).
    pub utterance_mwer: Vec<(f64, usize, usize)>,
    /// Batches skipped for lack of usable hypotheses.
    pub skipped: usize,
    pub wer_before: EvalReport,
    pub wer_after: EvalReport,
}

fn scale_gradients(grads: &LatticeGradients, factor: f64) -> LatticeGradients {
    LatticeGradients {
        blank: grads.blank.iter().map(|g| g * factor).collect(),
        label: grads.label.iter().map(|g| g * factor).collect(),
        no_path_mass: grads.no_path_mass,
    }
}

/// MWER + λ·RNN-T loss and gradients for one utterance. Returns `None`
/// when every hypothesis lost all probability mass.
fn utterance_step(
    model: &ToyFtModel,
    ilm: &FrozenLm,
    utt: &Utterance,
    nbest_decode: &DecodeConfig,
    band: BandConfig,
    cfg: &RunConfig,
    grads: &mut [f64],
) -> Result<Option<(f64, f64, usize, usize)>, HarnessError> {
    let frames = utt.features.len();
    let cache = model.encode(&utt.features);
    let scorer = ModelScorer::new(&cache);
    let hyps = beam_search(&scorer, ilm, nbest_decode)?;
    if hyps.is_empty() {
        return Ok(None);
    }
    let alpha = nbest_decode.weights.alpha();
    let beta = nbest_decode.weights.beta();

    // Score every hypothesis on its alignment-restricted lattice.
    let mut items = Vec::with_capacity(hyps.len());
    let mut parts = Vec::with_capacity(hyps.len());
    for hyp in &hyps {
        let mask = band_from_alignment(&hyp.viterbi_alignment, band, frames)?;
        let scores = model.assemble_scores(&cache, ilm, &hyp.tokens)?;
        let lattice = build_fused_lattice(&scores, &hyp.tokens, alpha)?;
        let loss = restricted_full_sum_loss(&lattice, &mask)?;
        items.push(NBestItem {
            tokens: hyp.tokens.clone(),
            full_sum_logprob: -loss,
            ilm_logprob_sum: hyp.ilm_logprob_sum,
            word_errors: word_edit_distance(&hyp.tokens, &utt.words),
        });
        parts.push((scores, lattice, mask));
    }
    if items
        .iter()
        .all(|i| i.full_sum_logprob == f64::NEG_INFINITY)
    {
        return Ok(None);
    }

    let loss = mwer_loss(&items, beta)?;
    let g = mwer_gradients(&items, beta)?;
    for (i, item) in items.iter().enumerate() {
        if g[i] == 0.0 || item.full_sum_logprob == f64::NEG_INFINITY {
            continue;
        }
        let (scores, lattice, mask) = &parts[i];
        let cell = restricted_loss_gradients(lattice, mask)?;
        // d loss / d cell = g_i · d(-restricted_loss)/d cell
        let scaled = scale_gradients(&cell, -g[i]);
        let score_grads = score_gradients_from_lattice(scores, &item.tokens, alpha, &scaled)?;
        model.accumulate_param_grads(&cache, &item.tokens, &score_grads, grads);
    }

    // Ground-truth-banded transducer term with the training α=1 rule.
    let gold_mask = band_from_alignment(&utt.gold_alignment, band, frames)?;
    let gold_scores = model.assemble_scores(&cache, ilm, &utt.words)?;
    let gold_lattice = build_training_lattice(&gold_scores, &utt.words)?;
    let rnnt = restricted_full_sum_loss(&gold_lattice, &gold_mask)?;
    if rnnt.is_finite() && cfg.lambda_rnnt > 0.0 {
        let cell = restricted_loss_gradients(&gold_lattice, &gold_mask)?;
        let scaled = scale_gradients(&cell, cfg.lambda_rnnt);
        let score_grads = score_gradients_from_lattice(&gold_scores, &utt.words, 1.0, &scaled)?;
        model.accumulate_param_grads(&cache, &utt.words, &score_grads, grads);
    }

    let min_r = items.iter().map(|i| i.word_errors).min().unwrap_or(0);
    let max_r = items.iter().map(|i| i.word_errors).max().unwrap_or(0);
    Ok(Some((loss, combined_loss(loss, rnnt, cfg.lambda_rnnt), min_r, max_r)))
}

/// Finetunes the model with the ILM-fusion-aware MWER objective; reports
/// dev WER before and after under the tuned decode setup.
///
/// The tuned fusion weights come from `cfg.alpha`/`cfg.beta`; N-best
/// generation always turns length normalization off, evaluation keeps the
/// configured setting.
pub fn mwer_finetune(
    model: &mut ToyFtModel,
    ilm: &FrozenLm,
    corpus: &ToyCorpus,
    cfg: &RunConfig,
) -> Result<MwerReport, HarnessError> {
    if corpus.train.is_empty() {
        return Err(HarnessError::Data("empty training split".into()));
    }
    let weights = FusionWeights::new(cfg.alpha, cfg.beta)?;
    let nbest_decode = DecodeConfig {
        beam_size: cfg.beam_size,
        weights,
        length_norm: false,
        max_symbols_per_frame: cfg.max_symbols_per_frame,
        mode: DecodeMode::Factorized,
        ..DecodeConfig::default()
    };
    let eval_decode = DecodeConfig {
        length_norm: cfg.length_norm,
        ..nbest_decode
    };
    let band = BandConfig {
        left_context: cfg.left_context,
        right_context: cfg.right_context,
    };

    let wer_before = evaluate(model, ilm, &corpus.dev, &corpus.vocab, &eval_decode)?;

    let ilm_hash = ilm.params_hash();
    let mut batch_rng = stream(cfg.seed, "mwer_batch");
    let batch_size = cfg.mwer_batch_size.min(corpus.train.len()).max(1);
    let mut velocity = vec![0.0; model.params().len()];
    let mut grads = vec![0.0; model.params().len()];
    let mut report = MwerReport {
        batch_losses: Vec::with_capacity(cfg.mwer_steps),
        utterance_mwer: Vec::new(),
        skipped: 0,
        wer_before,
        // placeholder; replaced after the loop
        wer_after: EvalReport {
            total_errors: 0,
            total_ref_words: 0,
            rare_errors: 0,
            rare_ref_words: 0,
            wer: 0.0,
            rare_wer: 0.0,
            records: Vec::new(),
        },
    };

    for step in 0..cfg.mwer_steps {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        let mut scored = 0usize;
        for _ in 0..batch_size {
            let utt = &corpus.train[index(&mut batch_rng, corpus.train.len())];
            match utterance_step(model, ilm, utt, &nbest_decode, band, cfg, &mut grads)? {
                Some((mwer, combined, min_r, max_r)) => {
                    report.utterance_mwer.push((mwer, min_r, max_r));
                    batch_loss += combined;
                    scored += 1;
                }
                None => {}
            }
        }
        if scored == 0 {
            report.skipped += 1;
            continue;
        }
        let scale = 1.0 / scored as f64;
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(HarnessError::Training(format!(
                "non-finite MWER batch loss at step {step}"
            )));
        }
        report.batch_losses.push(batch_loss);
        for ((p, v), g) in model
            .params_mut()
            .iter_mut()
            .zip(&mut velocity)
            .zip(&grads)
        {
            *v = cfg.momentum * *v - cfg.mwer_lr * scale * g;
            *p += *v;
        }
    }
    debug_assert_eq!(ilm.params_hash(), ilm_hash);

    report.wer_after = evaluate(model, ilm, &corpus.dev, &corpus.vocab, &eval_decode)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::gen_data;
    use crate::harness::model::FtDims;
    use crate::harness::train::train_ft;
    use crate::ilm::{freeze, LmDims, ToyNeuralLm};

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            train_utterances: 6,
            dev_utterances: 4,
            text_sentences: 15,
            vocab_words: 8,
            rare_words: 2,
            ft_steps: 30,
            batch_size: 3,
            mwer_steps: 4,
            mwer_batch_size: 3,
            lm_embed: 6,
            lm_hidden: 8,
            joint_dim: 6,
            blank_embed: 4,
            feature_dim: 5,
            alpha: 1.0,
            beta: 0.2,
            ..RunConfig::default()
        }
    }

    fn setup(cfg: &RunConfig) -> (super::super::data::ToyCorpus, FrozenLm, ToyFtModel) {
        let corpus = gen_data(cfg).unwrap();
        let ilm = freeze(
            ToyNeuralLm::random(
                LmDims {
                    vocab: corpus.vocab.size(),
                    context: cfg.lm_context,
                    embed: cfg.lm_embed,
                    hidden: cfg.lm_hidden,
                    boundary_token: 0,
                },
                &mut stream(cfg.seed, "init_lm"),
                cfg.init_scale,
            )
            .unwrap(),
        );
        let dims = FtDims {
            feature_dim: cfg.feature_dim,
            window: cfg.enc_window,
            joint_dim: cfg.joint_dim,
            blank_embed: cfg.blank_embed,
            vocab: corpus.vocab.size(),
        };
        let mut model =
            ToyFtModel::random(dims, &mut stream(cfg.seed, "init_ft"), cfg.init_scale).unwrap();
        train_ft(&mut model, &ilm, &corpus, cfg).unwrap();
        (corpus, ilm, model)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let cfg = RunConfig {
            mwer_lr: 0.0,
            mwer_steps: 1,
            ..tiny_cfg()
        };
        let (corpus, ilm, mut model) = setup(&cfg);
        let before = model.params().to_vec();
        let report = mwer_finetune(&mut model, &ilm, &corpus, &cfg).unwrap();
        assert!(before
            .iter()
            .zip(model.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(report.wer_before.wer, report.wer_after.wer);
    }

    #[test]
    fn mwer_losses_respect_error_bounds_and_ilm_stays_frozen() {
        let cfg = tiny_cfg();
        let (corpus, ilm, mut model) = setup(&cfg);
        let hash = ilm.params_hash();
        let report = mwer_finetune(&mut model, &ilm, &corpus, &cfg).unwrap();
        assert_eq!(ilm.params_hash(), hash);
        assert!(!report.utterance_mwer.is_empty());
        for &(loss, min_r, max_r) in &report.utterance_mwer {
            assert!(loss.is_finite());
            assert!(
                loss >= min_r as f64 - 1e-9 && loss <= max_r as f64 + 1e-9,
                "MWER loss {loss} outside [{min_r}, {max_r}]"
            );
        }
    }
}
