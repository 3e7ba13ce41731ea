//! Toy models, synthetic corpora, training recipes, metrics and the file
//! formats behind the `ftkit` CLI.

pub mod checks;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod model;
pub mod mwer_ft;
pub mod pipeline;
pub mod records;
pub mod sweep;
pub mod train;

pub use config::RunConfig;
pub use data::{gen_data, ToyCorpus, Utterance, Vocab};
pub use eval::{evaluate, EvalReport};
pub use model::{FtDims, ModelScorer, ToyFtModel};
pub use mwer_ft::{mwer_finetune, MwerReport};
pub use pipeline::{run_pipeline, PipelineOutcome};
pub use sweep::{sweep, SweepCell, SweepTable};
pub use train::{train_ft, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Training(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error(transparent)]
    Factorization(#[from] crate::factorization::FactorizationError),
    #[error(transparent)]
    Ilm(#[from] crate::ilm::IlmError),
    #[error(transparent)]
    Decode(#[from] crate::decode::DecodeError),
    #[error(transparent)]
    Mwer(#[from] crate::mwer::MwerError),
}
