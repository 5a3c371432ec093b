//! Run configuration: one TOML file covering model architecture, training
//! hyperparameters, data synthesis, and input/output plumbing. Every field
//! has a default; unknown keys are rejected so typos cannot silently
//! change an experiment. The fully merged ("effective") config is written
//! beside each run's outputs, and re-running from that file reproduces the
//! run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::SynthConfig;
use crate::error::{Error, Result};
use crate::framework::train::TrainConfig;
use crate::framework::ModelConfig;

/// Environment variable naming the directory that relative `output_dir`
/// values are resolved under.
pub const OUTPUT_ROOT_ENV: &str = "FFD_OUTPUT_ROOT";

/// Where training and scoring read their frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training manifest; defaults to the synthesizer's train split under
    /// the output directory.
    pub train_manifest: Option<PathBuf>,
    /// Validation manifest; defaults to the synthesizer's in-distribution
    /// test split.
    pub val_manifest: Option<PathBuf>,
    /// Grayscale pixel normalization, applied as `(pixel - mean) / std` on
    /// unit-range values.
    pub pixel_mean: f64,
    pub pixel_std: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_manifest: None,
            val_manifest: None,
            pixel_mean: 0.5,
            pixel_std: 0.5,
        }
    }
}

/// The whole run, as read from one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; relative values resolve under `FFD_OUTPUT_ROOT`
    /// when that variable is set.
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: PathBuf::from("runs"),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults when no file is given, otherwise the parsed file. Either
    /// way the result is validated.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if !self.data.pixel_mean.is_finite()
            || !self.data.pixel_std.is_finite()
            || self.data.pixel_std == 0.0
        {
            return Err(Error::Config(format!(
                "bad pixel normalization: mean {}, std {}",
                self.data.pixel_mean, self.data.pixel_std
            )));
        }
        Ok(())
    }

    /// The output directory with the environment override applied.
    pub fn effective_output_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
        resolve_output_dir(&self.output_dir, root.as_deref())
    }

    pub fn normalization(&self) -> crate::backbone::Normalization {
        crate::backbone::Normalization {
            mean: vec![self.data.pixel_mean],
            std: vec![self.data.pixel_std],
        }
    }

    /// Write the fully merged config next to a run's outputs.
    pub fn save_effective(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("config encoding failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Relative directories nest under the root when one is given; absolute
/// directories always win.
pub fn resolve_output_dir(dir: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}
