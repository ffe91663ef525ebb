//! Per-sequence manifest (`manifest.toml`); paths are relative to the sequence directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::depth::{read_depth_png, read_mask_png, DepthMap, Mask};
use crate::dataio::model::{read_model_points, ModelPoints};
use crate::dataio::poses::read_poses;
use crate::dataio::tracks::{read_tracks, TrackTable};
use crate::error::{Error, Result};
use crate::relpose::CameraIntrinsics;
use crate::se3::Pose;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub frame_count: usize,
    pub frame_rate_hz: f64,
    pub intrinsics: CameraIntrinsics,
    /// Object bounding-box dimensions, meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<[f64; 3]>,
    /// Directory of `NNNNNN.png` depth maps.
    pub depth_dir: String,
    /// Directory of `NNNNNN.png` object masks.
    pub mask_dir: String,
    /// Directory of `NNNNNN.png` color frames, served to the review UI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb_dir: Option<String>,
    pub model_points: String,
    pub absolute_poses: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_poses: Option<String>,
    pub tracks: String,
    /// Frames whose absolute pose the generator corrupted (synthetic sequences only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corrupted_frames: Vec<usize>,
}

pub fn frame_file_name(frame: usize) -> String {
    format!("{frame:06}.png")
}

/// A manifest together with the directory it was loaded from.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub dir: PathBuf,
    pub manifest: SequenceManifest,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(Error::InvalidInput("manifest frame rate must be positive".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::InvalidInput("manifest frame count is zero".into()));
        }
        if let Some(e) = self.extents {
            if e.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidInput("manifest extents must be positive".into()));
            }
        }
        self.intrinsics.validate()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl Sequence {
    /// Loads `dir/manifest.toml` and checks that the referenced files exist.
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: SequenceManifest = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        manifest.validate()?;
        let seq = Sequence {
            dir: dir.to_path_buf(),
            manifest,
        };
        let m = &seq.manifest;
        let mut required = vec![&m.model_points, &m.absolute_poses, &m.tracks, &m.depth_dir, &m.mask_dir];
        required.extend(m.ground_truth_poses.as_ref());
        for rel in required {
            let p = dir.join(rel);
            if !p.exists() {
                return Err(Error::InvalidInput(format!(
                    "manifest references missing path {}",
                    p.display()
                )));
            }
        }
        Ok(seq)
    }

    pub fn id(&self) -> &str {
        &self.manifest.sequence_id
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn depth(&self, frame: usize) -> Result<DepthMap> {
        read_depth_png(&self.dir.join(&self.manifest.depth_dir).join(frame_file_name(frame)))
    }

    pub fn mask(&self, frame: usize) -> Result<Mask> {
        read_mask_png(&self.dir.join(&self.manifest.mask_dir).join(frame_file_name(frame)))
    }

    pub fn frame_image_path(&self, frame: usize) -> Option<PathBuf> {
        self.manifest
            .rgb_dir
            .as_ref()
            .map(|d| self.dir.join(d).join(frame_file_name(frame)))
    }

    pub fn absolute_poses(&self) -> Result<Vec<(usize, Pose)>> {
        read_poses(&self.path(&self.manifest.absolute_poses))
    }

    pub fn ground_truth(&self) -> Result<Option<Vec<(usize, Pose)>>> {
        self.manifest
            .ground_truth_poses
            .as_ref()
            .map(|p| read_poses(&self.path(p)))
            .transpose()
    }

    pub fn tracks(&self) -> Result<TrackTable> {
        let t = read_tracks(&self.path(&self.manifest.tracks))?;
        t.validate(self.manifest.intrinsics.width, self.manifest.intrinsics.height)?;
        Ok(t)
    }

    pub fn model(&self) -> Result<ModelPoints> {
        read_model_points(&self.path(&self.manifest.model_points))
    }
}
