//! Run configuration files and content-hashed run identifiers.
//!
//! A `RunConfig` captures everything a run depends on: model seed and
//! dimensions, the attack configuration, which prompts to use, and where
//! artifacts go. Configs are JSON; unspecified fields take the documented
//! defaults, and fraction strings like `"16/255"` are accepted for the
//! numeric knobs. The run id is the SHA-256 of the tool version plus the
//! canonical serialized config, so identical configurations collide on
//! purpose and any change produces a fresh id.

use crate::attack::AttackConfig;
use crate::error::{CiaError, Result};
use crate::eval::{Category, Split, DEFAULT_MAX_NEW};
use crate::model::ModelDims;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A prompt file standing in for one bundled category/split group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptFileEntry {
    pub category: Category,
    pub split: Split,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model_seed: u64,
    pub dims: ModelDims,
    pub attack: AttackConfig,
    /// Seed for the bundled corpus' 6/4 train/eval shuffle.
    pub prompt_split_seed: u64,
    /// Prompt files overriding bundled groups; empty means fully bundled.
    pub prompt_files: Vec<PromptFileEntry>,
    /// Input image; a deterministic ramp image is used when absent.
    pub image_path: Option<String>,
    pub output_dir: Option<String>,
    /// Greedy-generation horizon during evaluation.
    pub max_new: usize,
    /// Worker threads for sweep cells; 1 = sequential.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model_seed: 42,
            dims: ModelDims::default(),
            attack: AttackConfig { seed: 42, ..AttackConfig::default() },
            prompt_split_seed: 42,
            prompt_files: Vec::new(),
            image_path: None,
            output_dir: None,
            max_new: DEFAULT_MAX_NEW,
            jobs: 1,
        }
    }
}

impl RunConfig {
    /// Route one seed to every seeded component.
    pub fn with_seed(seed: u64) -> Self {
        let mut c = RunConfig::default();
        c.set_seed(seed);
        c
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.model_seed = seed;
        self.attack.seed = seed;
        self.prompt_split_seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.attack.weights.validate()?;
        if self.max_new == 0 {
            return Err(CiaError::Config("max_new must be at least 1".to_string()));
        }
        Ok(())
    }
}

fn to_canonical_json(config: &RunConfig) -> Result<String> {
    serde_json::to_string(config)
        .map_err(|e| CiaError::Config(format!("config serialization failed: {e}")))
}

/// SHA-256 of tool version + canonical config JSON, hex-encoded.
pub fn run_id(config: &RunConfig) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(TOOL_VERSION.as_bytes());
    hasher.update(b"\n");
    hasher.update(to_canonical_json(config)?.as_bytes());
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CiaError::io(path.display().to_string(), e))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CiaError::format(path.display().to_string(), e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn save_run_config(config: &RunConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(config)
        .map_err(|e| CiaError::Config(format!("config serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CiaError::io(path.display().to_string(), e))
}
