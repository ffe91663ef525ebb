//! Object-pose trajectory fusion: smoothing of absolute poses, relative poses from
//! tracked points, SE(3) pose-graph fusion, and evaluation metrics.
//!
//! Poses map object-local coordinates to camera coordinates throughout.

pub mod calib_gt;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod pose_graph;
pub mod relpose;
pub mod se3;
pub mod smoother;

pub use error::{Error, Result};
pub use se3::{Pose, Rotation, Twist};
