//! `ftkit` — CLI over the factorized-transducer toolkit.
//!
//! A thin dispatcher: every subcommand resolves a [`RunConfig`] (defaults,
//! then `--config` file, then flags) and calls into the library. See the
//! README for the full pipeline walkthrough.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftkit::harness::checkpoint::{load_model, save_model};
use ftkit::harness::checks::{gradcheck_suite, oracle_suite, report_checks};
use ftkit::harness::data::{load_corpus, save_corpus, ToyCorpus};
use ftkit::harness::eval::decode_nbest;
use ftkit::harness::pipeline::{decode_config, ft_dims, pretrain_ilm};
use ftkit::harness::records::write_nbest;
use ftkit::harness::{
    evaluate, gen_data, mwer_finetune, sweep, train_ft, HarnessError, RunConfig, ToyFtModel,
};
use ftkit::ilm::{ilm_loss, load_frozen_lm};
use ftkit::rng::stream;

#[derive(Parser)]
#[command(
    name = "ftkit",
    about = "Factorized-transducer toolkit: lattice losses, ILM fusion decoding, and MWER training at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration resolution: defaults ← --config file ← individual flags.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Plain-text configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_utterances: Option<usize>,
    #[arg(long)]
    dev_utterances: Option<usize>,
    #[arg(long)]
    text_sentences: Option<usize>,
    #[arg(long)]
    vocab_words: Option<usize>,
    #[arg(long)]
    rare_words: Option<usize>,
    #[arg(long)]
    rare_train_max: Option<usize>,
    #[arg(long)]
    rare_dev_boost: Option<f64>,
    #[arg(long)]
    words_min: Option<usize>,
    #[arg(long)]
    words_max: Option<usize>,
    #[arg(long)]
    span_min: Option<usize>,
    #[arg(long)]
    span_max: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    lm_context: Option<usize>,
    #[arg(long)]
    lm_embed: Option<usize>,
    #[arg(long)]
    lm_hidden: Option<usize>,
    #[arg(long)]
    ilm_steps: Option<usize>,
    #[arg(long)]
    ilm_lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    enc_window: Option<usize>,
    #[arg(long)]
    joint_dim: Option<usize>,
    #[arg(long)]
    blank_embed: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    ft_steps: Option<usize>,
    #[arg(long)]
    ft_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_banded: Option<bool>,
    #[arg(long)]
    left_context: Option<usize>,
    #[arg(long)]
    right_context: Option<usize>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    length_norm: Option<bool>,
    #[arg(long)]
    max_symbols_per_frame: Option<usize>,
    /// Comma-separated, e.g. --alpha-grid 1.0,0.6
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    beta_grid: Option<Vec<f64>>,
    #[arg(long)]
    mwer_steps: Option<usize>,
    #[arg(long)]
    mwer_lr: Option<f64>,
    #[arg(long)]
    mwer_batch_size: Option<usize>,
    #[arg(long)]
    lambda_rnnt: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })*
            };
        }
        apply!(
            seed,
            train_utterances,
            dev_utterances,
            text_sentences,
            vocab_words,
            rare_words,
            rare_train_max,
            rare_dev_boost,
            words_min,
            words_max,
            span_min,
            span_max,
            feature_dim,
            noise,
            lm_context,
            lm_embed,
            lm_hidden,
            ilm_steps,
            ilm_lr,
            momentum,
            enc_window,
            joint_dim,
            blank_embed,
            init_scale,
            ft_steps,
            ft_lr,
            batch_size,
            train_banded,
            left_context,
            right_context,
            beam_size,
            alpha,
            beta,
            length_norm,
            max_symbols_per_frame,
            alpha_grid,
            beta_grid,
            mwer_steps,
            mwer_lr,
            mwer_batch_size,
            lambda_rnnt,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus into a directory.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for vocab.json, train.jsonl, dev.jsonl, text.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the internal LM on the corpus text and save a checkpoint.
    PretrainIlm {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the transducer against a frozen ILM checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ilm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode the dev split over the (α, β) grid and print the WER table.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ilm: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Optional JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Beam-decode a split into N-best JSON lines.
    Decode {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ilm: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Which split to decode: train or dev.
        #[arg(long, default_value = "dev")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// MWER-finetune at the configured fusion weights and save the model.
    MwerFinetune {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ilm: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report WER and rare-word WER on a split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ilm: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "dev")]
        split: String,
        /// Optional JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference gradient checks; exit code 0 iff all pass.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Independent-oracle equivalence checks; exit code 0 iff all pass.
    OracleCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn pick_split<'a>(corpus: &'a ToyCorpus, name: &str) -> Result<&'a [ftkit::harness::Utterance], HarnessError> {
    match name {
        "train" => Ok(&corpus.train),
        "dev" => Ok(&corpus.dev),
        other => Err(HarnessError::Config(format!(
            "unknown split {other:?} (want train or dev)"
        ))),
    }
}

fn load_model_for(corpus: &ToyCorpus, cfg: &RunConfig, path: &PathBuf) -> Result<ToyFtModel, HarnessError> {
    let model = load_model(path)?;
    if model.dims() != ft_dims(cfg, corpus.vocab.size()) {
        return Err(HarnessError::Config(
            "model checkpoint dimensions do not match the configured corpus".into(),
        ));
    }
    Ok(model)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenData { cfg, out } => {
            let cfg = cfg.resolve()?;
            let corpus = gen_data(&cfg)?;
            save_corpus(&corpus, &out)?;
            std::fs::write(out.join("config.txt"), cfg.to_key_values())?;
            println!(
                "wrote {} train / {} dev utterances, {} text sentences, vocab {} (+blank) to {}",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.text.len(),
                corpus.vocab.size(),
                out.display()
            );
        }
        Command::PretrainIlm { cfg, data, out } => {
            let cfg = cfg.resolve()?;
            let corpus = load_corpus(&data)?;
            let (ilm, curve) = pretrain_ilm(&cfg, &corpus)?;
            let final_loss = ilm_loss(&ilm, &corpus.text)?;
            ilm.save(&out)?;
            println!(
                "pretrained ILM for {} steps: loss {:.4} -> {:.4}, perplexity {:.2}; saved to {}",
                curve.len(),
                curve.first().copied().unwrap_or(f64::NAN),
                final_loss,
                final_loss.exp(),
                out.display()
            );
        }
        Command::Train {
            cfg,
            data,
            ilm,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let corpus = load_corpus(&data)?;
            let ilm = load_frozen_lm(&ilm)?;
            let mut model = ToyFtModel::random(
                ft_dims(&cfg, corpus.vocab.size()),
                &mut stream(cfg.seed, "init_ft"),
                cfg.init_scale,
            )?;
            let report = train_ft(&mut model, &ilm, &corpus, &cfg)?;
            save_model(&model, &out)?;
            println!(
                "trained {} steps: loss {:.4} -> {:.4}; saved to {}",
                report.loss_curve.len(),
                report.loss_curve.first().copied().unwrap_or(f64::NAN),
                report.loss_curve.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Sweep {
            cfg,
            data,
            ilm,
            model,
            report,
        } => {
            let cfg = cfg.resolve()?;
            let corpus = load_corpus(&data)?;
            let ilm = load_frozen_lm(&ilm)?;
            let model = load_model_for(&corpus, &cfg, &model)?;
            let table = sweep(&model, &ilm, &corpus.dev, &corpus.vocab, &cfg)?;
            println!("alpha  beta   WER      RW-WER");
            for (i, cell) in table.cells.iter().enumerate() {
                println!(
                    "{:<6} {:<6} {:<8.4} {:<8.4}{}",
                    cell.alpha,
                    cell.beta,
                    cell.wer,
                    cell.rare_wer,
                    if i == table.best { "  <- best" } else { "" }
                );
            }
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&table)?)?;
                println!("sweep table written to {}", path.display());
            }
        }
        Command::Decode {
            cfg,
            data,
            ilm,
            model,
            split,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let corpus = load_corpus(&data)?;
            let ilm = load_frozen_lm(&ilm)?;
            let model = load_model_for(&corpus, &cfg, &model)?;
            let split = pick_split(&corpus, &split)?;
            let decode = decode_config(&cfg, cfg.alpha, cfg.beta)?;
            let records = decode_nbest(&model, &ilm, split, &corpus.vocab, &decode)?;
            write_nbest(&records, &out)?;
            println!(
                "decoded {} utterances (alpha {}, beta {}) to {}",
                records.len(),
                cfg.alpha,
                cfg.beta,
                out.display()
            );
        }
        Command::MwerFinetune {
            cfg,
            data,
            ilm,
            model,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let corpus = load_corpus(&data)?;
            let ilm = load_frozen_lm(&ilm)?;
            let mut model = load_model_for(&corpus, &cfg, &model)?;
            let report = mwer_finetune(&mut model, &ilm, &corpus, &cfg)?;
            save_model(&model, &out)?;
            println!(
                "MWER finetune ({} steps, {} skipped batches): dev WER {:.4} -> {:.4}, RW-WER {:.4} -> {:.4}; saved to {}",
                cfg.mwer_steps,
                report.skipped,
                report.wer_before.wer,
                report.wer_after.wer,
                report.wer_before.rare_wer,
                report.wer_after.rare_wer,
                out.display()
            );
        }
        Command::Evaluate {
            cfg,
            data,
            ilm,
            model,
            split,
            report,
        } => {
            let cfg = cfg.resolve()?;
            let corpus = load_corpus(&data)?;
            let ilm = load_frozen_lm(&ilm)?;
            let model = load_model_for(&corpus, &cfg, &model)?;
            let split = pick_split(&corpus, &split)?;
            let decode = decode_config(&cfg, cfg.alpha, cfg.beta)?;
            let eval = evaluate(&model, &ilm, split, &corpus.vocab, &decode)?;
            println!(
                "WER {:.4} ({}/{}), RW-WER {:.4} ({}/{})",
                eval.wer,
                eval.total_errors,
                eval.total_ref_words,
                eval.rare_wer,
                eval.rare_errors,
                eval.rare_ref_words
            );
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&eval)?)?;
                println!("evaluation report written to {}", path.display());
            }
        }
        Command::Gradcheck { cfg } => {
            let cfg = cfg.resolve()?;
            report_checks(&gradcheck_suite(cfg.seed))?;
        }
        Command::OracleCheck { cfg } => {
            let cfg = cfg.resolve()?;
            report_checks(&oracle_suite(cfg.seed))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
