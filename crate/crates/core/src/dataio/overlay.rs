//! Overlay bundles for visual review: per frame and trajectory variant, the projected
//! bounding box (12 edges), object axes, and the frame-to-frame jitter.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relpose::CameraIntrinsics;
use crate::se3::{Pose, Vec3};

/// Variants in canonical order.
pub const VARIANTS: [&str; 4] = ["raw", "smoothed", "pgo", "gt"];

/// Segments are clipped against this camera-frame depth, meters.
pub const NEAR_PLANE_M: f64 = 1e-3;

pub const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 3),
    (3, 2),
    (2, 0),
    (4, 5),
    (5, 7),
    (7, 6),
    (6, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

pub type Segment2 = [[f64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantOverlay {
    /// Projection of the object origin; `None` when behind the camera.
    pub center: Option<[f64; 2]>,
    /// The 12 box edges in [`BOX_EDGES`] order; `None` when fully behind the camera.
    pub box_edges: Vec<Option<Segment2>>,
    /// Object x, y and z axes from the origin.
    pub axes: Vec<Option<Segment2>>,
    /// Rotation change since the previous frame of this variant, degrees.
    pub jitter_rot_deg: f64,
    /// Translation change since the previous frame of this variant, millimetres.
    pub jitter_trans_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayFrame {
    pub frame: usize,
    pub overlays: BTreeMap<String, VariantOverlay>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayBundle {
    pub sequence_id: String,
    pub frame_count: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub extents: [f64; 3],
    pub variants: Vec<String>,
    /// Variants requested but not available.
    pub notices: Vec<String>,
    pub frames: Vec<OverlayFrame>,
}

/// Box corners in object coordinates; bit `k` of the index selects the sign on axis `k`.
pub fn box_corners(extents: &Vec3) -> [Vec3; 8] {
    let h = extents * 0.5;
    std::array::from_fn(|k| {
        Vec3::new(
            if k & 1 == 0 { -h.x } else { h.x },
            if k & 2 == 0 { -h.y } else { h.y },
            if k & 4 == 0 { -h.z } else { h.z },
        )
    })
}

/// Projects the camera-frame segment `a`–`b` after clipping it to `z >= NEAR_PLANE_M`.
pub fn project_segment(k: &CameraIntrinsics, a: &Vec3, b: &Vec3) -> Option<Segment2> {
    let (mut a, mut b) = (*a, *b);
    if a.z < NEAR_PLANE_M && b.z < NEAR_PLANE_M {
        return None;
    }
    if a.z < NEAR_PLANE_M || b.z < NEAR_PLANE_M {
        let s = (NEAR_PLANE_M - a.z) / (b.z - a.z);
        let cut = a + (b - a) * s;
        if a.z < NEAR_PLANE_M {
            a = cut;
        } else {
            b = cut;
        }
    }
    Some([k.project(&a)?, k.project(&b)?])
}

fn variant_overlay(pose: &Pose, prev: Option<&Pose>, corners: &[Vec3; 8], axis_len: f64, k: &CameraIntrinsics) -> VariantOverlay {
    let cam: Vec<Vec3> = corners.iter().map(|c| pose.transform_point(c)).collect();
    let origin = pose.translation;
    let center = (origin.z >= NEAR_PLANE_M).then(|| k.project(&origin)).flatten();
    let axes = (0..3)
        .map(|a| {
            let mut tip = Vec3::zeros();
            tip[a] = axis_len;
            project_segment(k, &origin, &pose.transform_point(&tip))
        })
        .collect();
    let (rot, trans) = prev.map_or((0.0, 0.0), |p| p.distance(pose));
    VariantOverlay {
        center,
        box_edges: BOX_EDGES
            .iter()
            .map(|&(a, b)| project_segment(k, &cam[a], &cam[b]))
            .collect(),
        axes,
        jitter_rot_deg: rot.to_degrees(),
        jitter_trans_mm: trans * 1000.0,
    }
}

/// Builds the bundle for frames `0..frame_count`. Each variant is `(name, trajectory)`;
/// a `None` trajectory is recorded as a notice and omitted.
pub fn export_overlays(
    sequence_id: &str,
    frame_count: usize,
    variants: &[(&str, Option<&[(usize, Pose)]>)],
    extents: &Vec3,
    k: &CameraIntrinsics,
) -> Result<OverlayBundle> {
    if extents.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidInput("box extents must be positive".into()));
    }
    k.validate()?;
    let corners = box_corners(extents);
    let axis_len = 0.5 * extents.max();
    let mut names = Vec::new();
    let mut notices = Vec::new();
    let mut lookup: Vec<(&str, BTreeMap<usize, Pose>)> = Vec::new();
    for (name, traj) in variants {
        match traj {
            Some(t) => {
                if let Some((f, _)) = t.iter().find(|(f, _)| *f >= frame_count) {
                    return Err(Error::InvalidInput(format!(
                        "variant '{name}' has frame {f} beyond the {frame_count}-frame sequence"
                    )));
                }
                names.push(name.to_string());
                lookup.push((name, t.iter().copied().collect()));
            }
            None => {
                log::info!("overlay variant '{name}' not available, omitted");
                notices.push(format!("variant '{name}' not available"));
            }
        }
    }
    let frames = (0..frame_count)
        .map(|frame| OverlayFrame {
            frame,
            overlays: lookup
                .iter()
                .filter_map(|(name, map)| {
                    let pose = map.get(&frame)?;
                    let prev = frame.checked_sub(1).and_then(|p| map.get(&p));
                    Some((name.to_string(), variant_overlay(pose, prev, &corners, axis_len, k)))
                })
                .collect(),
        })
        .collect();
    Ok(OverlayBundle {
        sequence_id: sequence_id.to_string(),
        frame_count,
        image_width: k.width,
        image_height: k.height,
        extents: [extents.x, extents.y, extents.z],
        variants: names,
        notices,
        frames,
    })
}

pub fn write_overlay_bundle(path: &Path, bundle: &OverlayBundle) -> Result<()> {
    let text = serde_json::to_string(bundle).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_overlay_bundle(path: &Path) -> Result<OverlayBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
