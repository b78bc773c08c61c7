//! Ground-truth generators: two-phase Darcy flow, random boundary fields,
//! the linear peridynamic solid on a disk, and the on-disk dataset format.

mod darcy;
mod dataset;
mod field;
mod generate;
mod grf;
mod lps;

pub use darcy::{downsample, sample_conductivity, solve_darcy, threshold_field, DarcyConfig, Solution};
pub use dataset::{read_dataset, write_dataset, CloudDescriptor, Dataset, Manifest, Splits, FORMAT_VERSION};
pub use field::{CosineField, CosineFieldSpec};
pub use generate::{
    generate_darcy_collection, generate_darcy_dataset, generate_lps_dataset, read_collection, CollectionManifest,
    CollectionMember,
};
pub use grf::{GrfConfig, GrfField};
pub use lps::{lps_cloud, nonlocal_volume, sample_microstructure, solve_lps, LpsConfig, LpsProblem, Moduli, PhaseModuli};

use std::path::PathBuf;

use crate::diffcore::io::ArrayError;
use crate::diffcore::DiffError;
use crate::geometry::GeometryError;

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
