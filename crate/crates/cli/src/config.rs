use std::path::Path;
use std::time::Duration;

use gsedit_core::edit::{builtin_oracle, codec_by_name, EditConfig};
use gsedit_core::mesh::{MeshConfig, RefineConfig, BLOCKS_PER_AXIS};
use gsedit_core::metrics::embedder_by_name;
use gsedit_core::optim::ReconConfig;
use gsedit_core::RigSettings;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Every setting of the tool. Sections map to pipeline stages; missing keys
/// take their defaults, unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: String,
    /// Edit instruction for the scene edit.
    pub prompt: String,
    /// Instruction for texture refinement; refinement is skipped when unset.
    pub refine_prompt: Option<String>,
    /// Caption of the unedited object, for the directional metrics.
    pub caption: String,
    /// Caption of the edited object; defaults to the prompt.
    pub edited_caption: Option<String>,
    /// `identity`, `hue_shift:<colour>`, `brightness:<d>`, `region_darken[:f]`,
    /// `sharpen[:levels]` or `remote:<url>`.
    pub oracle: String,
    /// Oracle of the refinement stage; defaults to `oracle`.
    pub refine_oracle: Option<String>,
    /// `toy` or `remote:<url>`.
    pub embedder: String,
    /// `identity` or `downsample[:factor]`.
    pub codec: String,
    pub remote_timeout_s: f64,
    pub rig: RigSettings,
    pub reconstruct: ReconConfig,
    pub edit: EditConfig,
    pub mesh: MeshConfig,
    pub refine: RefineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: "out".into(),
            prompt: String::new(),
            refine_prompt: None,
            caption: "an object".into(),
            edited_caption: None,
            oracle: "identity".into(),
            refine_oracle: None,
            embedder: "toy".into(),
            codec: "identity".into(),
            remote_timeout_s: 60.0,
            rig: RigSettings::default(),
            reconstruct: ReconConfig::default(),
            edit: EditConfig::default(),
            mesh: MeshConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.remote_timeout_s)
    }

    pub fn edited_caption(&self) -> &str {
        self.edited_caption.as_deref().unwrap_or(&self.prompt)
    }

    pub fn refine_oracle(&self) -> &str {
        self.refine_oracle.as_deref().unwrap_or(&self.oracle)
    }

    /// Checks every section and the oracle, codec and embedder specs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: gsedit_core::Error| ConfigError::Invalid(e.to_string());
        if !(self.remote_timeout_s > 0.0 && self.remote_timeout_s.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "remote_timeout_s must be positive, got {}",
                self.remote_timeout_s
            )));
        }
        self.rig.build().map_err(invalid)?;
        self.reconstruct.validate().map_err(invalid)?;
        self.edit.validate().map_err(invalid)?;
        self.refine.validate().map_err(invalid)?;
        let m = &self.mesh;
        if !(m.threshold > 0.0 && m.threshold.is_finite()) {
            return Err(ConfigError::Invalid(format!("mesh.threshold must be positive, got {}", m.threshold)));
        }
        if m.resolution == 0 || m.resolution % BLOCKS_PER_AXIS != 0 {
            return Err(ConfigError::Invalid(format!(
                "mesh.resolution must be a positive multiple of {BLOCKS_PER_AXIS}, got {}",
                m.resolution
            )));
        }
        if m.texture_size < 8 {
            return Err(ConfigError::Invalid(format!("mesh.texture_size must be at least 8, got {}", m.texture_size)));
        }
        if m.target_triangles == 0 {
            return Err(ConfigError::Invalid("mesh.target_triangles must be positive".into()));
        }
        builtin_oracle(&self.oracle, self.timeout()).map_err(invalid)?;
        builtin_oracle(self.refine_oracle(), self.timeout()).map_err(invalid)?;
        codec_by_name(&self.codec).map_err(invalid)?;
        embedder_by_name(&self.embedder, self.timeout()).map_err(invalid)?;
        Ok(())
    }
}
