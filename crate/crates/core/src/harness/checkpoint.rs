//! Transducer model checkpoints: versioned JSON with dimensions plus the
//! flat parameter buffer. JSON numbers round-trip finite f64 bit-exactly.
//! (LM checkpoints live next to the LM, in the ilm module.)

use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FtDims, ToyFtModel};
use super::HarnessError;

pub const MODEL_CHECKPOINT_KIND: &str = "toy_ft_model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelCheckpoint {
    version: u32,
    kind: String,
    dims: FtDims,
    params: Vec<f64>,
}

pub fn save_model(model: &ToyFtModel, path: &Path) -> Result<(), HarnessError> {
    let ckpt = ModelCheckpoint {
        version: CHECKPOINT_VERSION,
        kind: MODEL_CHECKPOINT_KIND.to_string(),
        dims: model.dims(),
        params: model.params().to_vec(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(BufWriter::new(file), &ckpt)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ToyFtModel, HarnessError> {
    let file = std::fs::File::open(path)?;
    let ckpt: ModelCheckpoint = serde_json::from_reader(BufReader::new(file))?;
    if ckpt.kind != MODEL_CHECKPOINT_KIND {
        return Err(HarnessError::Config(format!(
            "checkpoint kind {:?} is not a {MODEL_CHECKPOINT_KIND}",
            ckpt.kind
        )));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(HarnessError::Config(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    ToyFtModel::from_parts(ckpt.dims, ckpt.params)
}
