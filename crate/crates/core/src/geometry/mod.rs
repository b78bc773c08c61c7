//! Point clouds, changes of reference frame and frame-invariant features.

mod cloud;
mod features;
mod layout;
mod transform;

use thiserror::Error;

use crate::diffcore::Tensor;

pub use cloud::{make_disk, make_grid, DiskSpec, GridSpec, Point, PointCloud, Rect, Region};
pub(crate) use cloud::{norm, sub};
pub(crate) use features::edge_features;
pub use features::{invariant_edge_features, signed_angle};
pub use layout::{ChannelKind, ChannelLayout};
pub use transform::{apply_transform, random_transform, transform_field, FrameTransform, TransformMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("node index {index} out of range for {len} nodes")]
    Index { index: usize, len: usize },
    #[error("channel layout: {0}")]
    Layout(String),
}

/// One input/response pair sampled on a point cloud, both `M × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    pub f: Tensor,
    pub u: Tensor,
}
