//! Loss, the fitting protocol, shallow-to-deep initialization, augmentation
//! and a hyperparameter grid search.

mod augment;
mod fit;
mod loss;
mod search;

pub use augment::{augment, AugmentSpec};
pub use fit::{
    check_layouts, fit, fit_normalizer, fit_prepared, output_target, prepare_split, shallow_to_deep, EpochRecord, PreparedSet, StopReason, TrainConfig, TrainReport};
pub use loss::{batch_loss, loss_and_grad, relative_l2, relative_l2_on_tape, LossAndGrad};
pub use search::{grid_search, SearchGrid, SearchOutcome, SearchTrial};

use crate::datagen::DatagenError;
use crate::diffcore::DiffError;
use crate::geometry::GeometryError;
use crate::operators::OperatorError;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("reference field has zero norm")]
    ZeroNorm,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged {
        epoch: usize,
        loss: f64,
        report: Box<TrainReport>,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
}
