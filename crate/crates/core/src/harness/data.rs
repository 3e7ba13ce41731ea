//! Synthetic corpus generation.
//!
//! Utterances are word sequences from a Markov word source; their features
//! are per-word prototype vectors stretched over random-length spans with
//! additive Gaussian noise, so a decoder must denoise with context. The
//! vocabulary has a rare tail: rare words occur naturally in the text-only
//! corpus (the ILM learns their contexts) but are held to a tiny count in
//! the paired training split and boosted in the dev split — the condition
//! under which ILM fusion has something to contribute.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, RunConfig};
use crate::rng::{self, stream};

/// Word table. Id 0 is the sentence boundary `</s>` (also the LM history
/// pad); real words fill 1..=vocab_words; the rare tail is the last
/// `rare_words` ids. The blank symbol is reserved one past the table:
/// it is an event, not a word, and never appears in text.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    rare_from: usize,
}

pub const BOUNDARY: usize = 0;

impl Vocab {
    fn build(words: Vec<String>, rare_from: usize) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self {
            words,
            index,
            rare_from,
        }
    }

    /// Table size including the boundary token (= non-blank vocabulary).
    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// Reserved blank id, one past the word table.
    pub fn blank_id(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn is_rare(&self, id: usize) -> bool {
        id >= self.rare_from && id < self.words.len()
    }

    pub fn rare_ids(&self) -> std::ops::Range<usize> {
        self.rare_from..self.words.len()
    }

    pub fn words_of(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.words[i].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// T×F feature matrix.
    pub features: Vec<Vec<f64>>,
    /// Reference word ids (never the boundary token).
    pub words: Vec<usize>,
    /// Gold emission frame per word: the first frame of its span.
    pub gold_alignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub vocab: Vocab,
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    /// Text-only sentences for ILM pretraining; each ends with BOUNDARY.
    pub text: Vec<Vec<usize>>,
    /// Per-word feature prototypes (index 0 = silence, used for the
    /// lead-in/lead-out frames). Regenerable from the seed; not persisted.
    pub prototypes: Vec<Vec<f64>>,
}

/// First-order word source: every word has three preferred successors.
struct MarkovSource {
    /// successors[w] = [(word, weight); 3]
    successors: Vec<Vec<(usize, f64)>>,
    stop_prob: f64,
}

impl MarkovSource {
    fn build(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Self {
        let v = cfg.vocab_words + 1;
        let rare_from = v - cfg.rare_words;
        let mut successors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); v];

        // Each rare word is the dominant successor of one common trigger
        // word, so label context predicts it sharply; the trigger is
        // chosen away from the rare word's acoustic twin.
        let mut trigger_of_rare = vec![0usize; v];
        for r in rare_from..v {
            let twin = r - cfg.rare_words;
            let trigger = loop {
                let t = 1 + rng::index(rng, rare_from - 1);
                if t != twin && trigger_of_rare[t] == 0 {
                    break t;
                }
            };
            trigger_of_rare[trigger] = r;
        }

        for w in 1..v {
            let mut picks: Vec<usize> = Vec::with_capacity(3);
            if w < rare_from && trigger_of_rare[w] != 0 {
                picks.push(trigger_of_rare[w]);
            }
            // Remaining slots: common words, avoiding the acoustic twin
            // of any rare pick so context cleanly separates the pair.
            let forbidden: Vec<usize> = picks
                .iter()
                .filter(|&&s| s >= rare_from)
                .map(|&s| s - cfg.rare_words)
                .collect();
            while picks.len() < 3 {
                let s = 1 + rng::index(rng, rare_from - 1);
                if !picks.contains(&s) && !forbidden.contains(&s) {
                    picks.push(s);
                }
            }
            successors[w] = picks.into_iter().zip([0.6, 0.28, 0.12]).collect();
        }
        Self {
            successors,
            stop_prob: 0.18,
        }
    }

    /// Samples a sentence of real words (no boundary token).
    fn sample(
        &self,
        cfg: &RunConfig,
        rng: &mut ChaCha8Rng,
        rare_boost: f64,
        rare_from: usize,
    ) -> Vec<usize> {
        // Start anywhere common so rare words only occur after context.
        let mut word = 1 + rng::index(rng, rare_from - 1);
        let mut sentence = vec![word];
        while sentence.len() < cfg.words_max {
            if sentence.len() >= cfg.words_min && rng::uniform(rng) < self.stop_prob {
                break;
            }
            let weights: Vec<f64> = self.successors[word]
                .iter()
                .map(|&(s, p)| if s >= rare_from { p * rare_boost } else { p })
                .collect();
            let pick = rng::weighted_index(rng, &weights);
            word = self.successors[word][pick].0;
            sentence.push(word);
        }
        sentence
    }
}

fn make_words(count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    const ONSETS: [&str; 12] = ["b", "d", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut words = vec!["</s>".to_string()];
    while words.len() < count + 1 {
        let mut w = String::new();
        for _ in 0..2 {
            w.push_str(ONSETS[rng::index(rng, ONSETS.len())]);
            w.push_str(VOWELS[rng::index(rng, VOWELS.len())]);
        }
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

fn render_utterance(
    id: String,
    words: Vec<usize>,
    cfg: &RunConfig,
    prototypes: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Utterance {
    let f = cfg.feature_dim;
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut gold_alignment = Vec::with_capacity(words.len());
    let emit = |proto: &[f64], frames: usize, features: &mut Vec<Vec<f64>>, rng: &mut ChaCha8Rng| {
        for _ in 0..frames {
            features.push(
                (0..f)
                    .map(|i| proto[i] + cfg.noise * rng::normal(rng))
                    .collect(),
            );
        }
    };
    // One leading silence frame, one trailing.
    emit(&prototypes[0], 1, &mut features, rng);
    for &w in &words {
        let span = cfg.span_min + rng::index(rng, cfg.span_max - cfg.span_min + 1);
        gold_alignment.push(features.len());
        emit(&prototypes[w], span, &mut features, rng);
    }
    emit(&prototypes[0], 1, &mut features, rng);
    Utterance {
        id,
        features,
        words,
        gold_alignment,
    }
}

/// Deterministic corpus generation: same config (and seed) → byte-identical
/// corpora.
pub fn gen_data(cfg: &RunConfig) -> Result<ToyCorpus, HarnessError> {
    cfg.validate()?;
    let v = cfg.vocab_words + 1;
    let rare_from = v - cfg.rare_words;

    let words = make_words(cfg.vocab_words, &mut stream(cfg.seed, "vocab"));
    let vocab = Vocab::build(words, rare_from);

    let source = MarkovSource::build(cfg, &mut stream(cfg.seed, "markov"));

    // Every rare word shares a prototype cluster with one common word
    // (its acoustic twin), separated by a small jitter. Under feature
    // noise the twins collide acoustically, so only label context can
    // tell them apart — the condition under which ILM fusion has
    // something to offer.
    let mut proto_rng = stream(cfg.seed, "protos");
    let jitter = 0.5;
    let mut prototypes: Vec<Vec<f64>> = vec![vec![0.0; cfg.feature_dim]; v];
    // Anchor of a confusable twin pair; always an earlier id.
    let anchor_of = |w: usize| -> Option<usize> {
        if w >= rare_from {
            Some(w - cfg.rare_words)
        } else {
            None
        }
    };
    for w in 1..v {
        let base: Vec<f64> = match anchor_of(w) {
            Some(anchor) => prototypes[anchor].clone(),
            None => (0..cfg.feature_dim)
                .map(|_| rng::normal(&mut proto_rng))
                .collect(),
        };
        prototypes[w] = base
            .iter()
            .map(|&x| x + jitter * rng::normal(&mut proto_rng))
            .collect();
    }

    let mut text_rng = stream(cfg.seed, "text");
    let mut text = Vec::with_capacity(cfg.text_sentences);
    for _ in 0..cfg.text_sentences {
        let mut s = source.sample(cfg, &mut text_rng, 1.0, rare_from);
        s.push(BOUNDARY);
        text.push(s);
    }

    // Paired training split: resample sentences that would push any rare
    // word over its budget; as a last resort swap rare words for the
    // top common successor of their predecessor.
    let mut train_rng = stream(cfg.seed, "train_utts");
    let mut rare_counts = vec![0usize; v];
    let mut train = Vec::with_capacity(cfg.train_utterances);
    for i in 0..cfg.train_utterances {
        let mut sentence = None;
        for _ in 0..200 {
            let cand = source.sample(cfg, &mut train_rng, 1.0, rare_from);
            let fits = {
                let mut extra = vec![0usize; v];
                for &w in &cand {
                    if vocab.is_rare(w) {
                        extra[w] += 1;
                    }
                }
                (rare_from..v).all(|w| rare_counts[w] + extra[w] <= cfg.rare_train_max)
            };
            if fits {
                sentence = Some(cand);
                break;
            }
        }
        let sentence = sentence.unwrap_or_else(|| {
            let mut cand = source.sample(cfg, &mut train_rng, 1.0, rare_from);
            for j in 0..cand.len() {
                if vocab.is_rare(cand[j]) && rare_counts[cand[j]] >= cfg.rare_train_max {
                    let prev = if j == 0 { None } else { Some(cand[j - 1]) };
                    cand[j] = prev
                        .and_then(|p| {
                            source.successors[p]
                                .iter()
                                .map(|&(s, _)| s)
                                .find(|&s| !vocab.is_rare(s))
                        })
                        .unwrap_or(1);
                }
            }
            cand
        });
        for &w in &sentence {
            if vocab.is_rare(w) {
                rare_counts[w] += 1;
            }
        }
        train.push(render_utterance(
            format!("train-{i:04}"),
            sentence,
            cfg,
            &prototypes,
            &mut train_rng,
        ));
    }

    // Dev split: rare successors boosted so the rare tail is observable.
    let mut dev_rng = stream(cfg.seed, "dev_utts");
    let mut dev = Vec::with_capacity(cfg.dev_utterances);
    for i in 0..cfg.dev_utterances {
        let sentence = source.sample(cfg, &mut dev_rng, cfg.rare_dev_boost, rare_from);
        dev.push(render_utterance(
            format!("dev-{i:04}"),
            sentence,
            cfg,
            &prototypes,
            &mut dev_rng,
        ));
    }

    Ok(ToyCorpus {
        vocab,
        train,
        dev,
        text,
        prototypes,
    })
}

// ── On-disk formats ──────────────────────────────────────────────────

/// One corpus record as persisted: a self-describing JSON object per line.
#[derive(Debug, Serialize, Deserialize)]
struct UtteranceRecord {
    id: String,
    features: Vec<Vec<f64>>,
    words: Vec<String>,
    alignment: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabRecord {
    words: Vec<String>,
    rare_from: usize,
}

fn write_split(path: &Path, split: &[Utterance], vocab: &Vocab) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for utt in split {
        let rec = UtteranceRecord {
            id: utt.id.clone(),
            features: utt.features.clone(),
            words: vocab.words_of(&utt.words),
            alignment: utt.gold_alignment.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn read_split(path: &Path, vocab: &Vocab) -> Result<Vec<Utterance>, HarnessError> {
    let mut split = Vec::new();
    for line in BufReader::new(std::fs::File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UtteranceRecord = serde_json::from_str(&line)?;
        let words = rec
            .words
            .iter()
            .map(|w| {
                vocab
                    .id(w)
                    .ok_or_else(|| HarnessError::Data(format!("unknown word {w:?} in {path:?}")))
            })
            .collect::<Result<Vec<usize>, _>>()?;
        split.push(Utterance {
            id: rec.id,
            features: rec.features,
            words,
            gold_alignment: rec.alignment,
        });
    }
    Ok(split)
}

/// Persists a corpus: `vocab.json`, `train.jsonl`, `dev.jsonl`,
/// `text.txt` (plain whitespace-tokenized lines).
pub fn save_corpus(corpus: &ToyCorpus, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let vocab_rec = VocabRecord {
        words: corpus.vocab.words.clone(),
        rare_from: corpus.vocab.rare_from,
    };
    std::fs::write(
        dir.join("vocab.json"),
        serde_json::to_string_pretty(&vocab_rec)?,
    )?;
    write_split(&dir.join("train.jsonl"), &corpus.train, &corpus.vocab)?;
    write_split(&dir.join("dev.jsonl"), &corpus.dev, &corpus.vocab)?;

    let mut text = std::io::BufWriter::new(std::fs::File::create(dir.join("text.txt"))?);
    for sentence in &corpus.text {
        let line: Vec<&str> = sentence
            .iter()
            .filter(|&&w| w != BOUNDARY)
            .map(|&w| corpus.vocab.word(w))
            .collect();
        writeln!(text, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Loads what [`save_corpus`] wrote. Prototypes are not persisted; the
/// loaded corpus carries an empty prototype table.
pub fn load_corpus(dir: &Path) -> Result<ToyCorpus, HarnessError> {
    let vocab_rec: VocabRecord =
        serde_json::from_str(&std::fs::read_to_string(dir.join("vocab.json"))?)?;
    let vocab = Vocab::build(vocab_rec.words, vocab_rec.rare_from);
    let train = read_split(&dir.join("train.jsonl"), &vocab)?;
    let dev = read_split(&dir.join("dev.jsonl"), &vocab)?;
    let mut text = Vec::new();
    for line in BufReader::new(std::fs::File::open(dir.join("text.txt"))?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut sentence = line
            .split_whitespace()
            .map(|w| {
                vocab
                    .id(w)
                    .ok_or_else(|| HarnessError::Data(format!("unknown word {w:?} in text.txt")))
            })
            .collect::<Result<Vec<usize>, _>>()?;
        sentence.push(BOUNDARY);
        text.push(sentence);
    }
    Ok(ToyCorpus {
        vocab,
        train,
        dev,
        text,
        prototypes: Vec::new(),
    })
}
