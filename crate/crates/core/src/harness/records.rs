//! Machine-readable output records: per-utterance N-best lists (JSON
//! lines) and the pipeline metrics report (one JSON document with a fixed
//! field order, so identical runs serialize identically).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::SweepCell;
use super::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NbestEntry {
    pub tokens: Vec<usize>,
    pub words: Vec<String>,
    pub score: f64,
    pub viterbi_alignment: Vec<usize>,
    pub ilm_logprob_sum: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NbestRecord {
    pub utterance_id: String,
    pub nbest: Vec<NbestEntry>,
}

pub fn write_nbest(records: &[NbestRecord], path: &Path) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_nbest(path: &Path) -> Result<Vec<NbestRecord>, HarnessError> {
    let mut records = Vec::new();
    for line in BufReader::new(std::fs::File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(records)
}

/// End-to-end pipeline metrics; the determinism contract is that two runs
/// with the same config serialize to identical JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub ilm_final_loss: f64,
    pub ilm_perplexity: f64,
    pub ft_final_loss: f64,
    pub sweep: Vec<SweepCell>,
    pub sweep_best_index: usize,
    pub standard_wer: f64,
    pub standard_rare_wer: f64,
    pub tuned_alpha: f64,
    pub tuned_beta: f64,
    pub tuned_wer: f64,
    pub tuned_rare_wer: f64,
    pub mwer_wer_before: f64,
    pub mwer_rare_wer_before: f64,
    pub mwer_wer_after: f64,
    pub mwer_rare_wer_after: f64,
    pub mwer_skipped_batches: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
