//! Fusion-weight grid sweep: decode the dev split at every (α, β) pair,
//! report WER and rare-word WER per cell, and mark the argmin.

use serde::{Deserialize, Serialize};

use super::data::{Utterance, Vocab};
use super::eval::evaluate;
use super::model::ToyFtModel;
use super::{HarnessError, RunConfig};
use crate::decode::{DecodeConfig, DecodeMode};
use crate::factorization::FusionWeights;
use crate::ilm::FrozenLm;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub wer: f64,
    pub rare_wer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    /// Cells in grid order: α outer, β inner.
    pub cells: Vec<SweepCell>,
    /// Index of the lowest-WER cell (first on ties).
    pub best: usize,
}

impl SweepTable {
    pub fn best_cell(&self) -> &SweepCell {
        &self.cells[self.best]
    }

    pub fn cell_at(&self, alpha: f64, beta: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.beta == beta)
    }
}

pub fn sweep(
    model: &ToyFtModel,
    ilm: &FrozenLm,
    split: &[Utterance],
    vocab: &Vocab,
    cfg: &RunConfig,
) -> Result<SweepTable, HarnessError> {
    if cfg.alpha_grid.is_empty() || cfg.beta_grid.is_empty() {
        return Err(HarnessError::Config("sweep grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(cfg.alpha_grid.len() * cfg.beta_grid.len());
    for &alpha in &cfg.alpha_grid {
        for &beta in &cfg.beta_grid {
            let decode = DecodeConfig {
                beam_size: cfg.beam_size,
                weights: FusionWeights::new(alpha, beta)?,
                length_norm: cfg.length_norm,
                max_symbols_per_frame: cfg.max_symbols_per_frame,
                mode: DecodeMode::Factorized,
                ..DecodeConfig::default()
            };
            let report = evaluate(model, ilm, split, vocab, &decode)?;
            cells.push(SweepCell {
                alpha,
                beta,
                wer: report.wer,
                rare_wer: report.rare_wer,
            });
        }
    }
    let mut best = 0;
    for (i, cell) in cells.iter().enumerate() {
        if cell.wer < cells[best].wer {
            best = i;
        }
    }
    Ok(SweepTable { cells, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_is_first_minimum() {
        let table = SweepTable {
            cells: vec![
                SweepCell {
                    alpha: 1.0,
                    beta: 0.0,
                    wer: 0.4,
                    rare_wer: 0.8,
                },
                SweepCell {
                    alpha: 1.0,
                    beta: 0.2,
                    wer: 0.3,
                    rare_wer: 0.6,
                },
                SweepCell {
                    alpha: 0.6,
                    beta: 0.6,
                    wer: 0.3,
                    rare_wer: 0.5,
                },
            ],
            best: 0,
        };
        // Reproduce the argmin rule used by sweep().
        let mut best = 0;
        for (i, c) in table.cells.iter().enumerate() {
            if c.wer < table.cells[best].wer {
                best = i;
            }
        }
        assert_eq!(best, 1, "ties resolve to the earlier grid cell");
    }
}
