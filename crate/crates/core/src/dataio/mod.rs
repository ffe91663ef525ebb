//! File formats, the sequence directory layout, the synthetic generator and overlay export.
//!
//! All pose-bearing text formats store quaternions w-first.

pub mod depth;
pub mod manifest;
pub mod model;
pub mod overlay;
pub mod overrides;
pub mod poses;
pub mod relatives;
pub mod synth;
pub mod tracks;

pub use depth::{read_depth_png, read_mask_png, write_depth_png, write_mask_png, DepthMap, Mask};
pub use manifest::{Sequence, SequenceManifest, MANIFEST_FILE};
pub use model::{read_model_points, ModelPoints};
pub use overlay::{export_overlays, read_overlay_bundle, write_overlay_bundle, OverlayBundle};
pub use overrides::{read_overrides, write_overrides, OverrideEntry, OverrideFile, OverrideTarget, Tier};
pub use poses::{read_poses, write_poses};
pub use relatives::{read_relatives, write_relatives};
pub use tracks::{read_tracks, write_tracks, TrackObservation, TrackTable};
