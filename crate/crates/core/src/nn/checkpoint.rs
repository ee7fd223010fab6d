//! Single-network checkpoint files.
//!
//! Layout (JSON, floats written in shortest round-trip form):
//!
//! ```text
//! {
//!   "format": "kickoff-net/1",
//!   "network": { "spec": {...}, "params": { "layers": [ { "weight": {"v":1,"dim":[in,out],"data":[row-major]}, "bias": {...} } ], "version": n } },
//!   "adam": null | { "m": ..., "v": ..., "t": n, "config": {...} },
//!   "metadata": { "training_step": n, "phase": "...", "seeds": [...], ... }
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Mlp};
use crate::error::{ensure, Error, Result};

pub const CHECKPOINT_FORMAT: &str = "kickoff-net/1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub label: String,
    pub training_step: u64,
    pub phase: String,
    pub seeds: Vec<u64>,
    pub players_per_team: usize,
    pub pe_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format: String,
    pub network: Mlp,
    pub adam: Option<AdamState>,
    pub metadata: CheckpointMetadata,
}

impl NetworkCheckpoint {
    pub fn new(network: Mlp, adam: Option<AdamState>, metadata: CheckpointMetadata) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            network,
            adam,
            metadata,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        ensure!(
            ckpt.format == CHECKPOINT_FORMAT,
            Serde,
            "unsupported checkpoint format {:?}",
            ckpt.format
        );
        ckpt.network.params.check_shapes(&ckpt.network.spec)?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
