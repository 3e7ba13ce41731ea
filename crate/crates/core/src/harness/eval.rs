//! Decoding-based evaluation: WER, rare-word WER and N-best records.
//!
//! Rare-word WER attributes errors to reference words through the
//! Levenshtein backtrace: a substitution or deletion whose reference word
//! is in the rare set counts as one rare error; insertions have no
//! reference word and never count. The rate divides by the number of rare
//! reference words.

use serde::{Deserialize, Serialize};

use super::data::{Utterance, Vocab};
use super::model::{ModelScorer, ToyFtModel};
use super::records::{NbestEntry, NbestRecord};
use super::HarnessError;
use crate::decode::{beam_search, DecodeConfig};
use crate::ilm::FrozenLm;
use crate::mwer::{edit_operations, word_edit_distance, EditOp};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub utterance_id: String,
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
    pub errors: usize,
    pub rare_errors: usize,
    pub rare_ref_words: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub total_errors: usize,
    pub total_ref_words: usize,
    pub rare_errors: usize,
    pub rare_ref_words: usize,
    pub wer: f64,
    pub rare_wer: f64,
    pub records: Vec<EvalRecord>,
}

/// Counts errors the backtrace attributes to rare reference words.
fn rare_attributed_errors(hyp: &[usize], reference: &[usize], vocab: &Vocab) -> usize {
    edit_operations(hyp, reference)
        .iter()
        .filter(|op| match op {
            EditOp::Substitute { ref_pos, .. } | EditOp::Delete { ref_pos } => {
                vocab.is_rare(reference[*ref_pos])
            }
            _ => false,
        })
        .count()
}

/// Decodes a split and scores the top hypothesis of each utterance.
pub fn evaluate(
    model: &ToyFtModel,
    ilm: &FrozenLm,
    split: &[Utterance],
    vocab: &Vocab,
    decode: &DecodeConfig,
) -> Result<EvalReport, HarnessError> {
    if split.is_empty() {
        return Err(HarnessError::Eval("empty evaluation split".into()));
    }
    let mut report = EvalReport {
        total_errors: 0,
        total_ref_words: 0,
        rare_errors: 0,
        rare_ref_words: 0,
        wer: 0.0,
        rare_wer: 0.0,
        records: Vec::with_capacity(split.len()),
    };
    for utt in split {
        let cache = model.encode(&utt.features);
        let scorer = ModelScorer::new(&cache);
        let nbest = beam_search(&scorer, ilm, decode)?;
        let hyp = nbest
            .first()
            .map(|h| h.tokens.clone())
            .unwrap_or_default();

        let errors = word_edit_distance(&hyp, &utt.words);
        let rare_errors = rare_attributed_errors(&hyp, &utt.words, vocab);
        let rare_ref_words = utt.words.iter().filter(|&&w| vocab.is_rare(w)).count();

        report.total_errors += errors;
        report.total_ref_words += utt.words.len();
        report.rare_errors += rare_errors;
        report.rare_ref_words += rare_ref_words;
        report.records.push(EvalRecord {
            utterance_id: utt.id.clone(),
            reference: vocab.words_of(&utt.words),
            hypothesis: vocab.words_of(&hyp),
            errors,
            rare_errors,
            rare_ref_words,
        });
    }
    report.wer = if report.total_ref_words == 0 {
        0.0
    } else {
        report.total_errors as f64 / report.total_ref_words as f64
    };
    report.rare_wer = if report.rare_ref_words == 0 {
        0.0
    } else {
        report.rare_errors as f64 / report.rare_ref_words as f64
    };
    Ok(report)
}

/// Full N-best records for a split, one per utterance.
pub fn decode_nbest(
    model: &ToyFtModel,
    ilm: &FrozenLm,
    split: &[Utterance],
    vocab: &Vocab,
    decode: &DecodeConfig,
) -> Result<Vec<NbestRecord>, HarnessError> {
    let mut records = Vec::with_capacity(split.len());
    for utt in split {
        let cache = model.encode(&utt.features);
        let scorer = ModelScorer::new(&cache);
        let nbest = beam_search(&scorer, ilm, decode)?;
        records.push(NbestRecord {
            utterance_id: utt.id.clone(),
            nbest: nbest
                .into_iter()
                .map(|h| NbestEntry {
                    words: vocab.words_of(&h.tokens),
                    tokens: h.tokens,
                    score: h.score,
                    viterbi_alignment: h.viterbi_alignment,
                    ilm_logprob_sum: h.ilm_logprob_sum,
                })
                .collect(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::gen_data;
    use crate::harness::model::FtDims;
    use crate::harness::RunConfig;
    use crate::ilm::{freeze, LmDims, ToyNeuralLm};
    use crate::rng::stream;

    #[test]
    fn wer_is_recomputable_from_records() {
        let cfg = RunConfig {
            train_utterances: 4,
            dev_utterances: 6,
            text_sentences: 10,
            vocab_words: 10,
            rare_words: 2,
            ..RunConfig::default()
        };
        let corpus = gen_data(&cfg).unwrap();
        let ilm = freeze(
            ToyNeuralLm::random(
                LmDims {
                    vocab: corpus.vocab.size(),
                    context: 2,
                    embed: 4,
                    hidden: 6,
                    boundary_token: 0,
                },
                &mut stream(0, "init_lm"),
                0.1,
            )
            .unwrap(),
        );
        let model = ToyFtModel::random(
            FtDims {
                feature_dim: cfg.feature_dim,
                window: cfg.enc_window,
                joint_dim: 6,
                blank_embed: 4,
                vocab: corpus.vocab.size(),
            },
            &mut stream(0, "init_ft"),
            0.1,
        )
        .unwrap();

        let report = evaluate(
            &model,
            &ilm,
            &corpus.dev,
            &corpus.vocab,
            &DecodeConfig::default(),
        )
        .unwrap();
        // Independent recomputation from the per-utterance records.
        let errors: usize = report
            .records
            .iter()
            .map(|r| word_edit_distance(&r.hypothesis, &r.reference))
            .sum();
        let ref_words: usize = report.records.iter().map(|r| r.reference.len()).sum();
        assert_eq!(errors, report.total_errors);
        assert_eq!(ref_words, report.total_ref_words);
        assert!((report.wer - errors as f64 / ref_words as f64).abs() < 1e-15);
    }

    #[test]
    fn rare_attribution_matches_hand_count() {
        // vocab: words w0..; mark one as rare via a tiny corpus.
        let cfg = RunConfig {
            vocab_words: 6,
            rare_words: 2,
            ..RunConfig::default()
        };
        let corpus = gen_data(&cfg).unwrap();
        let vocab = &corpus.vocab;
        let rare: Vec<usize> = vocab.rare_ids().collect();
        let common: Vec<usize> = (1..vocab.size())
            .filter(|&w| !vocab.is_rare(w))
            .collect();

        // ref: [c0, rare0, c1, rare1]; hyp substitutes rare0, deletes
        // rare1, inserts a word: 2 rare errors out of 2 rare ref words.
        let reference = vec![common[0], rare[0], common[1], rare[1]];
        let hyp = vec![common[0], common[2], common[1], common[3]];
        // hyp has a substitution at rare0's slot and rare1 replaced by
        // common[3]: both are substitutions on rare reference words.
        assert_eq!(rare_attributed_errors(&hyp, &reference, vocab), 2);

        let hyp2 = vec![common[0], common[1]];
        // rare0 and rare1 both deleted.
        assert_eq!(rare_attributed_errors(&hyp2, &reference, vocab), 2);

        let hyp3 = reference.clone();
        assert_eq!(rare_attributed_errors(&hyp3, &reference, vocab), 0);
    }

    #[test]
    fn empty_split_is_an_error() {
        let cfg = RunConfig {
            vocab_words: 6,
            rare_words: 1,
            ..RunConfig::default()
        };
        let corpus = gen_data(&cfg).unwrap();
        let ilm = freeze(
            ToyNeuralLm::random(
                LmDims {
                    vocab: corpus.vocab.size(),
                    context: 2,
                    embed: 4,
                    hidden: 4,
                    boundary_token: 0,
                },
                &mut stream(0, "lm"),
                0.1,
            )
            .unwrap(),
        );
        let model = ToyFtModel::zeros(FtDims {
            feature_dim: cfg.feature_dim,
            window: 3,
            joint_dim: 4,
            blank_embed: 3,
            vocab: corpus.vocab.size(),
        })
        .unwrap();
        assert!(matches!(
            evaluate(&model, &ilm, &[], &corpus.vocab, &DecodeConfig::default()),
            Err(HarnessError::Eval(_))
        ));
    }
}
