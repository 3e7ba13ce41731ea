//! The end-to-end recipe: generate data → pretrain the ILM on text →
//! freeze it → train the transducer → sweep fusion weights on dev → MWER
//! finetune at the tuned weights → report. Fully deterministic given the
//! config; each stage draws from its own named random stream.

use super::data::{gen_data, ToyCorpus};
use super::eval::{evaluate, EvalReport};
use super::model::{FtDims, ToyFtModel};
use super::mwer_ft::{mwer_finetune, MwerReport};
use super::records::MetricsReport;
use super::sweep::{sweep, SweepTable};
use super::train::{train_ft, TrainReport};
use super::{HarnessError, RunConfig};
use crate::decode::{DecodeConfig, DecodeMode};
use crate::factorization::FusionWeights;
use crate::ilm::{freeze, ilm_loss, pretrain, FrozenLm, LmDims, PretrainOptions, ToyNeuralLm};
use crate::rng::stream;

pub struct PipelineOutcome {
    pub corpus: ToyCorpus,
    pub ilm: FrozenLm,
    pub model: ToyFtModel,
    pub ilm_curve: Vec<f64>,
    pub train_report: TrainReport,
    pub sweep: SweepTable,
    pub standard_eval: EvalReport,
    pub tuned_eval: EvalReport,
    pub mwer: MwerReport,
    pub report: MetricsReport,
}

pub fn lm_dims(cfg: &RunConfig, vocab: usize) -> LmDims {
    LmDims {
        vocab,
        context: cfg.lm_context,
        embed: cfg.lm_embed,
        hidden: cfg.lm_hidden,
        boundary_token: super::data::BOUNDARY,
    }
}

pub fn ft_dims(cfg: &RunConfig, vocab: usize) -> FtDims {
    FtDims {
        feature_dim: cfg.feature_dim,
        window: cfg.enc_window,
        joint_dim: cfg.joint_dim,
        blank_embed: cfg.blank_embed,
        vocab,
    }
}

/// Pretrains a fresh LM on the corpus text and freezes it.
pub fn pretrain_ilm(
    cfg: &RunConfig,
    corpus: &ToyCorpus,
) -> Result<(FrozenLm, Vec<f64>), HarnessError> {
    let mut lm = ToyNeuralLm::random(
        lm_dims(cfg, corpus.vocab.size()),
        &mut stream(cfg.seed, "init_lm"),
        cfg.init_scale,
    )?;
    let curve = pretrain(
        &mut lm,
        &corpus.text,
        PretrainOptions {
            steps: cfg.ilm_steps,
            learning_rate: cfg.ilm_lr,
            momentum: cfg.momentum,
        },
    )?;
    Ok((freeze(lm), curve))
}

pub fn decode_config(cfg: &RunConfig, alpha: f64, beta: f64) -> Result<DecodeConfig, HarnessError> {
    Ok(DecodeConfig {
        beam_size: cfg.beam_size,
        weights: FusionWeights::new(alpha, beta)?,
        length_norm: cfg.length_norm,
        max_symbols_per_frame: cfg.max_symbols_per_frame,
        mode: DecodeMode::Factorized,
        ..DecodeConfig::default()
    })
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome, HarnessError> {
    cfg.validate()?;
    let corpus = gen_data(cfg)?;

    let (ilm, ilm_curve) = pretrain_ilm(cfg, &corpus)?;
    let ilm_final_loss = ilm_loss(&ilm, &corpus.text)?;

    let mut model = ToyFtModel::random(
        ft_dims(cfg, corpus.vocab.size()),
        &mut stream(cfg.seed, "init_ft"),
        cfg.init_scale,
    )?;
    let train_report = train_ft(&mut model, &ilm, &corpus, cfg)?;

    let table = sweep(&model, &ilm, &corpus.dev, &corpus.vocab, cfg)?;
    let standard_eval = evaluate(
        &model,
        &ilm,
        &corpus.dev,
        &corpus.vocab,
        &decode_config(cfg, 1.0, 0.0)?,
    )?;
    let best = table.best_cell().clone();
    let tuned_eval = evaluate(
        &model,
        &ilm,
        &corpus.dev,
        &corpus.vocab,
        &decode_config(cfg, best.alpha, best.beta)?,
    )?;

    let mwer_cfg = RunConfig {
        alpha: best.alpha,
        beta: best.beta,
        ..cfg.clone()
    };
    let mwer = mwer_finetune(&mut model, &ilm, &corpus, &mwer_cfg)?;

    let report = MetricsReport {
        seed: cfg.seed,
        ilm_final_loss,
        ilm_perplexity: ilm_final_loss.exp(),
        ft_final_loss: train_report.loss_curve.last().copied().unwrap_or(f64::NAN),
        sweep: table.cells.clone(),
        sweep_best_index: table.best,
        standard_wer: standard_eval.wer,
        standard_rare_wer: standard_eval.rare_wer,
        tuned_alpha: best.alpha,
        tuned_beta: best.beta,
        tuned_wer: tuned_eval.wer,
        tuned_rare_wer: tuned_eval.rare_wer,
        mwer_wer_before: mwer.wer_before.wer,
        mwer_rare_wer_before: mwer.wer_before.rare_wer,
        mwer_wer_after: mwer.wer_after.wer,
        mwer_rare_wer_after: mwer.wer_after.rare_wer,
        mwer_skipped_batches: mwer.skipped,
    };

    Ok(PipelineOutcome {
        corpus,
        ilm,
        model,
        ilm_curve,
        train_report,
        sweep: table,
        standard_eval,
        tuned_eval,
        mwer,
        report,
    })
}
