//! Camera-centric multi-person 3D pose estimation: decoding of bottom-up
//! network maps, matching and fusion with top-down estimates, camera
//! geometry, consistency scores, and evaluation metrics.

// negated comparisons reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod decode;
pub mod error;
pub mod fuse;
pub mod graph;
pub mod geometry;
pub mod io;
pub mod manifest;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod skeleton;
pub mod synth;
pub mod tensor;
pub mod types;

pub use error::{Error, Result};
pub use skeleton::Skeleton;
pub use tensor::Tensor;
pub use types::{CameraIntrinsics, Detection, DetectionSet, Pose2D, Pose3D, PoseSet};
