//! Transducer training on the toy corpus: full-sum loss over the training
//! lattice, optionally restricted to a band around the gold alignment,
//! with minibatch SGD and momentum. The ILM stays frozen throughout.

use super::data::{ToyCorpus, Utterance};
use super::model::ToyFtModel;
use super::{HarnessError, RunConfig};
use crate::factorization::{build_training_lattice, score_gradients_from_lattice};
use crate::ilm::FrozenLm;
use crate::lattice::{
    full_sum_loss, loss_gradients, restricted_full_sum_loss, restricted_loss_gradients,
};
use crate::mwer::{band_from_alignment, BandConfig};
use crate::rng::{index, stream};

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean per-utterance loss at each step.
    pub loss_curve: Vec<f64>,
}

/// One utterance's loss and parameter gradients, accumulated into `grads`.
fn utterance_loss_and_grads(
    model: &ToyFtModel,
    ilm: &FrozenLm,
    utt: &Utterance,
    band: Option<BandConfig>,
    grads: &mut [f64],
) -> Result<f64, HarnessError> {
    let cache = model.encode(&utt.features);
    let scores = model.assemble_scores(&cache, ilm, &utt.words)?;
    let lattice = build_training_lattice(&scores, &utt.words)?;
    let (loss, cell_grads) = match band {
        Some(cfg) => {
            let mask = band_from_alignment(&utt.gold_alignment, cfg, utt.features.len())?;
            (
                restricted_full_sum_loss(&lattice, &mask)?,
                restricted_loss_gradients(&lattice, &mask)?,
            )
        }
        None => (full_sum_loss(&lattice)?, loss_gradients(&lattice)?),
    };
    let score_grads = score_gradients_from_lattice(&scores, &utt.words, 1.0, &cell_grads)?;
    model.accumulate_param_grads(&cache, &utt.words, &score_grads, grads);
    Ok(loss)
}

/// Trains the encoder and blank predictor; `cfg.ft_steps == 0` leaves the
/// model untouched. Errors out on a non-finite loss instead of continuing
/// to diverge.
pub fn train_ft(
    model: &mut ToyFtModel,
    ilm: &FrozenLm,
    corpus: &ToyCorpus,
    cfg: &RunConfig,
) -> Result<TrainReport, HarnessError> {
    if corpus.train.is_empty() {
        return Err(HarnessError::Data("empty training split".into()));
    }
    let band = cfg.train_banded.then(|| BandConfig {
        left_context: cfg.left_context,
        right_context: cfg.right_context,
    });
    let mut batch_rng = stream(cfg.seed, "batch");
    let batch_size = cfg.batch_size.min(corpus.train.len()).max(1);

    let mut loss_curve = Vec::with_capacity(cfg.ft_steps);
    let mut velocity = vec![0.0; model.params().len()];
    let mut grads = vec![0.0; model.params().len()];
    for step in 0..cfg.ft_steps {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..batch_size {
            let utt = &corpus.train[index(&mut batch_rng, corpus.train.len())];
            batch_loss += utterance_loss_and_grads(model, ilm, utt, band, &mut grads)?;
        }
        let scale = 1.0 / batch_size as f64;
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(HarnessError::Training(format!(
                "non-finite loss {batch_loss} at step {step}"
            )));
        }
        loss_curve.push(batch_loss);
        for ((p, v), g) in model
            .params_mut()
            .iter_mut()
            .zip(&mut velocity)
            .zip(&grads)
        {
            *v = cfg.momentum * *v - cfg.ft_lr * scale * g;
            *p += *v;
        }
    }
    Ok(TrainReport { loss_curve })
}
