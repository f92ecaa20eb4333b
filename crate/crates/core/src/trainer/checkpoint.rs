//! Versioned JSON checkpoints.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HyperParams, ModelParams};
use crate::kg::AlignmentDataset;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "ontoea-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub hyper: HyperParams,
    pub iteration: usize,
    pub params: ModelParams,
    pub rng: ChaCha8Rng,
    /// `[kg1 entities, kg2 entities, classes]` the parameters were built for.
    pub sizes: [usize; 3],
}

impl Checkpoint {
    pub fn new(
        hyper: HyperParams,
        iteration: usize,
        params: ModelParams,
        rng: ChaCha8Rng,
        dataset: &AlignmentDataset,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            hyper,
            iteration,
            params,
            rng,
            sizes: dataset_sizes(dataset),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck)
    }

    /// Fails when the checkpoint was trained on differently sized data.
    pub fn check_matches(&self, dataset: &AlignmentDataset) -> Result<()> {
        let want = dataset_sizes(dataset);
        if self.sizes != want {
            return Err(Error::Checkpoint(format!(
                "checkpoint sizes {:?} do not match dataset {:?}",
                self.sizes, want
            )));
        }
        Ok(())
    }
}

fn dataset_sizes(d: &AlignmentDataset) -> [usize; 3] {
    [
        d.kg1.num_entities(),
        d.kg2.num_entities(),
        d.ontology.num_classes(),
    ]
}
