//! Run configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gateway::{Mode, DEFAULT_BASE_URL, DEFAULT_MAX_IN_FLIGHT, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_TEMPERATURE};
use crate::generation::{PipelineVariant, DEFAULT_MAX_REPAIRS};
use crate::svg::DEFAULT_TARGET_PX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub variant: PipelineVariant,
    pub mode: Mode,
    pub model_id: String,
    pub image_model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub target_px: u32,
    pub max_repairs: u32,
    pub seed: u64,
    /// Generated from the clock and seed when absent.
    pub run_id: Option<String>,
    pub jobs: usize,
    pub cache_dir: PathBuf,
    pub runs_dir: PathBuf,
    pub base_url: String,
    /// Directory of `<name>.txt` files overriding the built-in templates.
    pub prompts_dir: Option<PathBuf>,
    pub include_statement_diagram: bool,
    /// Evaluate at most this many problems per topic.
    pub sample: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus/sample.json"),
            variant: PipelineVariant::Baseline,
            mode: Mode::Replay,
            model_id: "gpt-4o".into(),
            image_model: "dall-e-3".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            target_px: DEFAULT_TARGET_PX,
            max_repairs: DEFAULT_MAX_REPAIRS,
            seed: 0,
            run_id: None,
            jobs: DEFAULT_MAX_IN_FLIGHT,
            cache_dir: PathBuf::from("fixtures/cache"),
            runs_dir: PathBuf::from("runs"),
            base_url: DEFAULT_BASE_URL.into(),
            prompts_dir: None,
            include_statement_diagram: true,
            sample: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=2.0).contains(&self.temperature) {
            return invalid(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(crate::svg::MIN_TARGET_PX..=crate::svg::MAX_TARGET_PX).contains(&self.target_px) {
            return invalid(format!("target_px {} outside [64, 4096]", self.target_px));
        }
        if self.jobs == 0 {
            return invalid("jobs must be at least 1".into());
        }
        if self.max_output_tokens == 0 {
            return invalid("max_output_tokens must be positive".into());
        }
        if self.sample == Some(0) {
            return invalid("sample must be at least 1".into());
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return invalid(format!("run_id {id:?} is not a plain directory name"));
            }
        }
        Ok(())
    }

    /// The configured run id, or `<UTC timestamp>-s<seed>`.
    pub fn resolved_run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}-s{}", chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ"), self.seed))
    }
}
