//! Run configuration: every knob of the toy pipeline, a plain-text
//! key=value config file format, and defaults that reproduce the stock
//! desk-scale experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// All pipeline knobs. The config file and the CLI flags both map 1:1
/// onto these fields by snake_case name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,

    // Synthetic data.
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub text_sentences: usize,
    /// Real words in the vocabulary (the sentence boundary is extra).
    pub vocab_words: usize,
    /// How many of the words form the rare tail.
    pub rare_words: usize,
    /// Maximum occurrences of each rare word in the paired training split.
    pub rare_train_max: usize,
    /// Multiplier on rare-word successor probabilities when sampling the
    /// dev split, so rare words actually occur at evaluation time.
    pub rare_dev_boost: f64,
    pub words_min: usize,
    pub words_max: usize,
    /// Frames per word span.
    pub span_min: usize,
    pub span_max: usize,
    pub feature_dim: usize,
    /// Feature noise scale; 0 makes frames exactly their prototypes.
    pub noise: f64,

    // Internal LM.
    pub lm_context: usize,
    pub lm_embed: usize,
    pub lm_hidden: usize,
    pub ilm_steps: usize,
    pub ilm_lr: f64,
    /// Momentum shared by every SGD loop in the harness.
    pub momentum: f64,

    // Toy transducer model and its training.
    pub enc_window: usize,
    pub joint_dim: usize,
    pub blank_embed: usize,
    pub init_scale: f64,
    pub ft_steps: usize,
    pub ft_lr: f64,
    pub batch_size: usize,
    /// Restrict the training loss to a band around the gold alignment.
    pub train_banded: bool,

    // Alignment-restriction band.
    pub left_context: usize,
    pub right_context: usize,

    // Decoding.
    pub beam_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub length_norm: bool,
    pub max_symbols_per_frame: usize,

    // Fusion-weight sweep.
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,

    // MWER finetuning.
    pub mwer_steps: usize,
    pub mwer_lr: f64,
    pub mwer_batch_size: usize,
    pub lambda_rnnt: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_utterances: 150,
            dev_utterances: 60,
            text_sentences: 600,
            vocab_words: 40,
            rare_words: 8,
            rare_train_max: 1,
            rare_dev_boost: 1.0,
            words_min: 3,
            words_max: 8,
            span_min: 2,
            span_max: 4,
            feature_dim: 8,
            noise: 0.45,
            lm_context: 3,
            lm_embed: 16,
            lm_hidden: 32,
            ilm_steps: 600,
            ilm_lr: 0.5,
            momentum: 0.9,
            enc_window: 3,
            joint_dim: 16,
            blank_embed: 12,
            init_scale: 0.1,
            ft_steps: 200,
            ft_lr: 0.05,
            batch_size: 16,
            train_banded: true,
            left_context: 15,
            right_context: 15,
            beam_size: 5,
            alpha: 1.0,
            beta: 0.0,
            length_norm: true,
            max_symbols_per_frame: 5,
            alpha_grid: vec![1.0, 0.6],
            beta_grid: vec![0.0, 0.2, 0.6],
            mwer_steps: 40,
            mwer_lr: 0.05,
            mwer_batch_size: 8,
            lambda_rnnt: 0.1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .trim()
        .parse()
        .map_err(|_| HarnessError::Config(format!("cannot parse {key} from {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, HarnessError> {
    value
        .split(',')
        .map(|v| parse::<f64>(key, v))
        .collect::<Result<Vec<f64>, _>>()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "train_utterances" => self.train_utterances = parse(key, value)?,
            "dev_utterances" => self.dev_utterances = parse(key, value)?,
            "text_sentences" => self.text_sentences = parse(key, value)?,
            "vocab_words" => self.vocab_words = parse(key, value)?,
            "rare_words" => self.rare_words = parse(key, value)?,
            "rare_train_max" => self.rare_train_max = parse(key, value)?,
            "rare_dev_boost" => self.rare_dev_boost = parse(key, value)?,
            "words_min" => self.words_min = parse(key, value)?,
            "words_max" => self.words_max = parse(key, value)?,
            "span_min" => self.span_min = parse(key, value)?,
            "span_max" => self.span_max = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "lm_context" => self.lm_context = parse(key, value)?,
            "lm_embed" => self.lm_embed = parse(key, value)?,
            "lm_hidden" => self.lm_hidden = parse(key, value)?,
            "ilm_steps" => self.ilm_steps = parse(key, value)?,
            "ilm_lr" => self.ilm_lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "enc_window" => self.enc_window = parse(key, value)?,
            "joint_dim" => self.joint_dim = parse(key, value)?,
            "blank_embed" => self.blank_embed = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "ft_steps" => self.ft_steps = parse(key, value)?,
            "ft_lr" => self.ft_lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "train_banded" => self.train_banded = parse(key, value)?,
            "left_context" => self.left_context = parse(key, value)?,
            "right_context" => self.right_context = parse(key, value)?,
            "beam_size" => self.beam_size = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "length_norm" => self.length_norm = parse(key, value)?,
            "max_symbols_per_frame" => self.max_symbols_per_frame = parse(key, value)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, value)?,
            "beta_grid" => self.beta_grid = parse_list(key, value)?,
            "mwer_steps" => self.mwer_steps = parse(key, value)?,
            "mwer_lr" => self.mwer_lr = parse(key, value)?,
            "mwer_batch_size" => self.mwer_batch_size = parse(key, value)?,
            "lambda_rnnt" => self.lambda_rnnt = parse(key, value)?,
            other => {
                return Err(HarnessError::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Parses a plain-text config: one `key = value` per line, `#` starts
    /// a comment. Unset keys keep their defaults.
    pub fn from_key_values(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_key_values(&std::fs::read_to_string(path)?)
    }

    /// The config as a parseable key=value document.
    pub fn to_key_values(&self) -> String {
        let list = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("seed", self.seed.to_string());
        push("train_utterances", self.train_utterances.to_string());
        push("dev_utterances", self.dev_utterances.to_string());
        push("text_sentences", self.text_sentences.to_string());
        push("vocab_words", self.vocab_words.to_string());
        push("rare_words", self.rare_words.to_string());
        push("rare_train_max", self.rare_train_max.to_string());
        push("rare_dev_boost", self.rare_dev_boost.to_string());
        push("words_min", self.words_min.to_string());
        push("words_max", self.words_max.to_string());
        push("span_min", self.span_min.to_string());
        push("span_max", self.span_max.to_string());
        push("feature_dim", self.feature_dim.to_string());
        push("noise", self.noise.to_string());
        push("lm_context", self.lm_context.to_string());
        push("lm_embed", self.lm_embed.to_string());
        push("lm_hidden", self.lm_hidden.to_string());
        push("ilm_steps", self.ilm_steps.to_string());
        push("ilm_lr", self.ilm_lr.to_string());
        push("momentum", self.momentum.to_string());
        push("enc_window", self.enc_window.to_string());
        push("joint_dim", self.joint_dim.to_string());
        push("blank_embed", self.blank_embed.to_string());
        push("init_scale", self.init_scale.to_string());
        push("ft_steps", self.ft_steps.to_string());
        push("ft_lr", self.ft_lr.to_string());
        push("batch_size", self.batch_size.to_string());
        push("train_banded", self.train_banded.to_string());
        push("left_context", self.left_context.to_string());
        push("right_context", self.right_context.to_string());
        push("beam_size", self.beam_size.to_string());
        push("alpha", self.alpha.to_string());
        push("beta", self.beta.to_string());
        push("length_norm", self.length_norm.to_string());
        push("max_symbols_per_frame", self.max_symbols_per_frame.to_string());
        push("alpha_grid", list(&self.alpha_grid));
        push("beta_grid", list(&self.beta_grid));
        push("mwer_steps", self.mwer_steps.to_string());
        push("mwer_lr", self.mwer_lr.to_string());
        push("mwer_batch_size", self.mwer_batch_size.to_string());
        push("lambda_rnnt", self.lambda_rnnt.to_string());
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.vocab_words == 0 || self.rare_words >= self.vocab_words {
            return Err(HarnessError::Config(format!(
                "vocabulary of {} words is too small for {} rare words",
                self.vocab_words, self.rare_words
            )));
        }
        if self.words_min == 0 || self.words_max < self.words_min {
            return Err(HarnessError::Config(
                "words_min must be >= 1 and <= words_max".into(),
            ));
        }
        if self.span_min == 0 || self.span_max < self.span_min {
            return Err(HarnessError::Config(
                "span_min must be >= 1 and <= span_max".into(),
            ));
        }
        if self.alpha_grid.is_empty() || self.beta_grid.is_empty() {
            return Err(HarnessError::Config("sweep grids must be non-empty".into()));
        }
        if self.beam_size == 0 {
            return Err(HarnessError::Config("beam_size must be >= 1".into()));
        }
        if self.lambda_rnnt < 0.0 {
            return Err(HarnessError::Config("lambda_rnnt must be >= 0".into()));
        }
        if self.enc_window % 2 == 0 {
            return Err(HarnessError::Config(
                "enc_window must be odd (centered window)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(HarnessError::Config("momentum must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn key_values_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 17;
        cfg.alpha_grid = vec![1.0, 0.6, 0.3];
        cfg.noise = 0.5;
        let parsed = RunConfig::from_key_values(&cfg.to_key_values()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::from_key_values(
            "# a comment\n\nseed = 3 # trailing\nbeta_grid = 0.0, 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.beta_grid, vec![0.0, 0.2]);
    }

    #[test]
    fn unknown_keys_and_bad_values_error() {
        assert!(RunConfig::from_key_values("nope = 1\n").is_err());
        assert!(RunConfig::from_key_values("seed = banana\n").is_err());
        assert!(RunConfig::from_key_values("seed\n").is_err());
    }

    #[test]
    fn rare_word_overflow_is_a_config_error() {
        assert!(RunConfig::from_key_values("vocab_words = 5\nrare_words = 5\n").is_err());
    }
}
