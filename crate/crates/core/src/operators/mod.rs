//! Integral neural operators: lifting, `L` shared kernel-integral layers
//! and projection.
//!
//! The kernel network `κ` is evaluated once per forward pass on the edge
//! features; each layer then contracts its last hidden layer against the
//! current features `h` ([`crate::diffcore::Tape::kernel_integral`]) instead
//! of materializing a `d_h × d_h` matrix per edge.

mod checkpoint;
mod config;
mod forward;
mod normalize;
mod params;


use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint_manifest, save_checkpoint, CheckpointManifest, ParamEntry, CHECKPOINT_VERSION};
pub use config::{Architecture, OperatorConfig};
pub use forward::{
    forward, forward_on_tape, forward_prepared, gradient_check, kernel_features, layer_update, lift, prepare, project, trace, LayerState,
    PreparedSample,
};
pub use normalize::{ChannelNorm, Normalizer};
pub use params::{ModelParams, ModelVars};

use crate::diffcore::io::ArrayError;
use crate::diffcore::DiffError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("invalid operator config: {0}")]
    Config(String),
    #[error("{0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Array(#[from] ArrayError),
}
