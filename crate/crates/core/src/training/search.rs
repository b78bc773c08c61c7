use serde::{Deserialize, Serialize};

use super::fit::{TrainConfig, TrainReport};
use super::TrainingError;

/// Candidate values; every combination is tried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub lrs: Vec<f64>,
    pub decays: Vec<f64>,
    pub regularizations: Vec<f64>,
}

impl SearchGrid {
    /// Learning rates in `[1e-4, 1e-2]`, decays `{0.5, 0.7, 0.9}`,
    /// regularization in `[1e-5, 1e-2]`.
    pub fn standard() -> Self {
        Self {
            lrs: vec![1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            decays: vec![0.5, 0.7, 0.9],
            regularizations: vec![1e-5, 1e-4, 1e-3, 1e-2],
        }
    }

    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &lr in &self.lrs {
            for &decay in &self.decays {
                for &regularization in &self.regularizations {
                    out.push(TrainConfig {
                        lr,
                        decay,
                        regularization,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub config: TrainConfig,
    /// `None` when the run diverged or never validated.
    pub validation_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub best_validation_error: f64,
    pub trials: Vec<SearchTrial>,
}

/// Runs `train` for every grid point and keeps the configuration with the
/// lowest best-validation error. Diverged runs count as failures.
pub fn grid_search(
    base: &TrainConfig,
    grid: &SearchGrid,
    mut train: impl FnMut(&TrainConfig) -> Result<TrainReport, TrainingError>,
) -> Result<SearchOutcome, TrainingError> {
    let mut trials = Vec::new();
    let mut best: Option<(TrainConfig, f64)> = None;
    for cfg in grid.configs(base) {
        let err = match train(&cfg) {
            Ok(r) => r.best_validation_error,
            Err(TrainingError::Diverged { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(e) = err {
            if best.as_ref().is_none_or(|(_, b)| e < *b) {
                best = Some((cfg.clone(), e));
            }
        }
        trials.push(SearchTrial {
            config: cfg,
            validation_error: err,
        });
    }
    let (best, best_validation_error) =
        best.ok_or_else(|| TrainingError::Config("every grid point diverged".into()))?;
    Ok(SearchOutcome {
        best,
        best_validation_error,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Architecture;
    use crate::training::StopReason;

    fn fake(cfg: &TrainConfig) -> Result<TrainReport, TrainingError> {
        // Error surface with a minimum at lr = 1e-3, decay = 0.7, reg = 1e-4.
        let e = (cfg.lr.log10() + 3.0).powi(2) + (cfg.decay - 0.7).powi(2) + (cfg.regularization.log10() + 4.0).powi(2);
        Ok(TrainReport {
            config: cfg.clone(),
            architecture: Architecture::InoScalar,
            num_params: 0,
            n_train: 1,
            n_validation: 1,
            epochs: Vec::new(),
            best_epoch: Some(0),
            best_validation_error: Some(e),
            stop: StopReason::MaxEpochs,
            wall_time_secs: 0.0,
            checkpoint: None,
        })
    }

    #[test]
    fn picks_the_minimum() {
        let grid = SearchGrid::standard();
        let out = grid_search(&TrainConfig::default(), &grid, fake).unwrap();
        assert_eq!(out.trials.len(), 5 * 3 * 4);
        assert_eq!((out.best.lr, out.best.decay, out.best.regularization), (1e-3, 0.7, 1e-4));
        assert_eq!(out.best.max_epochs, TrainConfig::default().max_epochs);
    }

    #[test]
    fn standard_grid_stays_in_range() {
        let g = SearchGrid::standard();
        assert!(g.lrs.iter().all(|&l| (1e-4..=1e-2).contains(&l)));
        assert!(g.regularizations.iter().all(|&r| (1e-5..=1e-2).contains(&r)));
        assert_eq!(g.decays, vec![0.5, 0.7, 0.9]);
    }
}
