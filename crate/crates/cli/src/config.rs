//! Pipeline configuration, read from a sectioned TOML file.
//!
//! ```toml
//! [noise]
//! sigma_meas_trans = 0.005
//! [relpose]
//! strides = [1, 5]
//! [optimizer.robust_kernel]
//! kind = "huber"
//! delta = 1.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use posefuse_core::pose_graph::{OptimizerOptions, WeightConfig};
use posefuse_core::relpose::{RansacConfig, DEFAULT_SIGMA_POINT};
use posefuse_core::smoother::NoiseConfig;
use posefuse_core::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelposeConfig {
    /// Frame offsets of the relative edges.
    pub strides: Vec<usize>,
    /// Per-point noise used for the relative information matrices, meters.
    pub sigma_point: f64,
}

impl Default for RelposeConfig {
    fn default() -> Self {
        RelposeConfig {
            strides: vec![1, 5],
            sigma_point: DEFAULT_SIGMA_POINT,
        }
    }
}

/// Stage output file names, relative to the sequence directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub smoothed: String,
    pub relatives: String,
    pub optimized: String,
    pub overrides: String,
    pub overlays: String,
    pub report: String,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            smoothed: "smoothed.csv".into(),
            relatives: "relatives.csv".into(),
            optimized: "optimized.csv".into(),
            overrides: "overrides.csv".into(),
            overlays: "overlays.json".into(),
            report: "report.json".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub noise: NoiseConfig,
    pub ransac: RansacConfig,
    pub relpose: RelposeConfig,
    pub weights: WeightConfig,
    pub optimizer: OptimizerOptions,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        // dt comes from the sequence; check the rest with a placeholder rate
        self.noise.with_frame_rate(1.0).validate()?;
        self.ransac.validate()?;
        self.weights.validate()?;
        self.optimizer.validate()?;
        if self.relpose.strides.is_empty() || self.relpose.strides.contains(&0) {
            return Err(Error::InvalidArgument("relpose strides must be positive and non-empty".into()));
        }
        if !(self.relpose.sigma_point.is_finite() && self.relpose.sigma_point > 0.0) {
            return Err(Error::InvalidArgument("sigma_point must be positive".into()));
        }
        let p = &self.paths;
        for name in [&p.smoothed, &p.relatives, &p.optimized, &p.overrides, &p.overlays, &p.report] {
            if name.is_empty() {
                return Err(Error::InvalidArgument("output paths must be non-empty".into()));
            }
        }
        Ok(())
    }
}
