use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::render::Palette;
use crate::error::{Error, Result};
use crate::marl::TrainConfig;
use crate::scenario::ScenarioConfig;

/// Top-level run file: `[scenario]`, `[train]`, `[run]` and `[render]`
/// sections. Every section is optional and falls back to its defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub run: RunSection,
    pub render: RenderOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub output_dir: PathBuf,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            output_dir: PathBuf::from("runs/default"),
            eval_episodes: 100,
            eval_seed: 1_000_003,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    /// Render every `stride`-th step.
    pub stride: usize,
    /// Width and height of each frame in pixels.
    pub canvas_size: u32,
    pub palette: Palette,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            stride: 1,
            canvas_size: 600,
            palette: Palette::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .map_or_else(|| "config".to_string(), |line| format!("line {line}"));
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.train.validate()?;
        if self.train.steps_per_episode != self.scenario.horizon {
            return Err(Error::config(
                "train.steps_per_episode",
                format!("must equal scenario.horizon ({})", self.scenario.horizon),
            ));
        }
        if self.run.eval_episodes == 0 {
            return Err(Error::config("run.eval_episodes", "must be >= 1"));
        }
        if self.render.stride == 0 {
            return Err(Error::config("render.stride", "must be >= 1"));
        }
        if self.render.canvas_size == 0 {
            return Err(Error::config("render.canvas_size", "must be >= 1"));
        }
        Ok(())
    }
}
