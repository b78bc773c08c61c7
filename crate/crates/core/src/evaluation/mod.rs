//! Test metrics, frame-change checks, transform sweeps, resolution transfer
//! and report files.

mod checks;
mod metrics;
mod report;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use checks::{
    check_equivariance, check_invariance, check_reflection, frame_deviation, random_frame, Expectation, Variant,
};
pub use metrics::{evaluate, resolution_transfer, sample_errors, Split, TransferRow};
pub use report::{emit_report, read_report, EvalReport, ReportFormat, ReportMeta, SplitError, TheoremCheck};
pub use sweep::{transform_sweep, SweepCurve, SweepPoint, SweepSpec};

use crate::geometry::GeometryError;
use crate::operators::OperatorError;
use crate::training::TrainingError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Config(String),
    #[error("cannot write report {path}: {detail}")]
    Output { path: PathBuf, detail: String },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
