//! Run configuration: one TOML file drives training, evaluation, and the
//! experiment commands. Unknown keys are rejected; omitted keys take the
//! documented defaults.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::ModelConfig;
use crate::optim::OptimConfig;
use crate::synthdata::SceneSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseMode {
    /// Use the exact generator poses.
    GroundTruth,
    /// Regress poses with the pose head.
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    #[serde(rename = "f64")]
    F64,
    #[serde(rename = "f32")]
    F32,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Scenes to generate; even indices train, odd indices validate.
    pub num_samples: usize,
    pub pose_mode: PoseMode,
    pub precision: Precision,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: OptimConfig,
    pub scene: SceneSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            iterations: 500,
            batch_size: 2,
            num_samples: 18,
            pose_mode: PoseMode::GroundTruth,
            precision: Precision::F64,
            out_dir: PathBuf::from("runs/default"),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimConfig::default(),
            scene: SceneSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.scene.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.num_samples < 2 {
            return Err(Error::config(
                "num_samples must be >= 2 (train and validation splits)",
            ));
        }
        if self.scene.image_h != self.model.input_h || self.scene.image_w != self.model.input_w {
            return Err(Error::config(format!(
                "scene images {}x{} must match the model input {}x{}",
                self.scene.image_h, self.scene.image_w, self.model.input_h, self.model.input_w
            )));
        }
        if self.scene.depth_min < self.model.d_min || self.scene.depth_max > self.model.d_max {
            return Err(Error::config(format!(
                "scene depth range [{}, {}] must lie inside the model range [{}, {}]",
                self.scene.depth_min, self.scene.depth_max, self.model.d_min, self.model.d_max
            )));
        }
        if self.pose_mode == PoseMode::Predicted && !self.model.with_pose_head {
            return Err(Error::config(
                "pose_mode = \"predicted\" requires model.with_pose_head = true",
            ));
        }
        if self.loss.num_scales != self.model.num_scales {
            return Err(Error::config(
                "loss.num_scales must match model.num_scales",
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(format!("config encode: {e}")))
    }
}
