use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentSpec};
use super::loss::{loss_and_grad, relative_l2};
use super::TrainingError;
use crate::datagen::Dataset;
use crate::diffcore::{AdamConfig, AdamState, Tensor};
use crate::geometry::{ChannelKind, ChannelLayout, PointCloud};
use crate::operators::{forward_prepared, prepare, Architecture, ModelParams, Normalizer, OperatorConfig, PreparedSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied to the learning rate every `decay_interval` epochs.
    pub decay: f64,
    pub decay_interval: usize,
    /// Coefficient of the `Σθ²` penalty.
    pub regularization: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// `None` trains on the full training split per step.
    pub batch_size: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            decay: 0.7,
            decay_interval: 50,
            regularization: 1e-4,
            max_epochs: 2000,
            patience: 60,
            batch_size: None,
            seed: 0,
            augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: String| Err(TrainingError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay {} must lie in (0, 1]", self.decay));
        }
        if self.decay_interval == 0 {
            return bad("decay interval must be at least one epoch".into());
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return bad(format!("regularization {} must be non-negative", self.regularization));
        }
        if self.patience >= self.max_epochs {
            return bad(format!(
                "patience {} must be smaller than max epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi((epoch / self.decay_interval) as i32)
    }
}

/// Inputs prepared once for a fixed operator configuration, with targets.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub preps: Vec<PreparedSample>,
    pub targets: Vec<Tensor>,
}

impl PreparedSet {
    pub fn len(&self) -> usize {
        self.preps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preps.is_empty()
    }

    /// Mean relative error of `params` over the set.
    pub fn mean_error(&self, params: &ModelParams) -> Result<f64, TrainingError> {
        Ok(self.errors(params)?.iter().sum::<f64>() / self.len().max(1) as f64)
    }

    /// Per-sample relative errors, in order.
    pub fn errors(&self, params: &ModelParams) -> Result<Vec<f64>, TrainingError> {
        self.preps
            .par_iter()
            .zip(self.targets.par_iter())
            .map(|(p, t)| relative_l2(&forward_prepared(params, p)?, t))
            .collect()
    }
}

/// Normalizer fitted on the training split. Position outputs are scaled by
/// the displacement magnitude.
pub fn fit_normalizer(config: &OperatorConfig, data: &Dataset) -> Result<Normalizer, TrainingError> {
    if config.f_layout != data.manifest.f_layout || config.u_layout.kinds().len() != data.manifest.u_layout.kinds().len() {
        return Err(TrainingError::Config(format!(
            "operator layouts `{}` -> `{}` do not match dataset `{}` -> `{}`",
            config.f_layout, config.u_layout, data.manifest.f_layout, data.manifest.u_layout
        )));
    }
    let train = &data.samples[data.manifest.splits.train_range()];
    Ok(Normalizer::fit(&config.f_layout, &data.manifest.u_layout, train.iter().map(|s| (&s.f, &s.u))))
}

fn converts_to_position(config: &OperatorConfig, data_u: &ChannelLayout) -> bool {
    config.u_layout.kinds() == [ChannelKind::Point2] && data_u.kinds() == [ChannelKind::Vector2]
}

/// Checks that `config` can be trained or evaluated on data with the given
/// layouts.
pub fn check_layouts(config: &OperatorConfig, data_f: &ChannelLayout, data_u: &ChannelLayout) -> Result<(), TrainingError> {
    if !converts_to_position(config, data_u) && config.u_layout != *data_u {
        return Err(TrainingError::Config(format!(
            "operator output layout `{}` does not match dataset layout `{data_u}`",
            config.u_layout
        )));
    }
    if config.f_layout != *data_f {
        return Err(TrainingError::Config(format!(
            "operator input layout `{}` does not match dataset layout `{data_f}`",
            config.f_layout
        )));
    }
    Ok(())
}

/// Reference output of `config` for a stored response: displacements become
/// positions `x + u` for the position-output architecture.
pub fn output_target(config: &OperatorConfig, data_u: &ChannelLayout, cloud: &PointCloud, u: &Tensor) -> Tensor {
    let mut u = u.clone();
    if converts_to_position(config, data_u) {
        for (k, p) in cloud.coords().iter().enumerate() {
            let row = u.row_mut(k);
            row[0] += p[0];
            row[1] += p[1];
        }
    }
    u
}

/// Prepares samples `range` of `data` for `config`, with targets from
/// [`output_target`].
pub fn prepare_split(config: &OperatorConfig, data: &Dataset, range: Range<usize>) -> Result<PreparedSet, TrainingError> {
    let (lf, lu) = (&data.manifest.f_layout, &data.manifest.u_layout);
    check_layouts(config, lf, lu)?;
    let items: Vec<(PreparedSample, Tensor)> = range
        .into_par_iter()
        .map(|i| {
            let cloud = data.cloud_for(i);
            let s = &data.samples[i];
            Ok((prepare(config, cloud, &s.f)?, output_target(config, lu, cloud, &s.u)))
        })
        .collect::<Result<_, TrainingError>>()?;
    let (preps, targets) = items.into_iter().unzip();
    Ok(PreparedSet { preps, targets })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training relative error plus penalty, before the epoch's steps.
    pub train_loss: f64,
    pub train_error: f64,
    /// Set only on epochs where the training loss improved.
    pub validation_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub architecture: Architecture,
    pub num_params: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation_error: Option<f64>,
    pub stop: StopReason,
    pub wall_time_secs: f64,
    /// Where the retained parameters were saved, if anywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn first_train_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_loss)
    }

    pub fn last_train_error(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Trains on the dataset's train split (augmented first when configured) and
/// early-stops on its validation split. Returns the parameters with the best
/// validation error.
pub fn fit(cfg: &TrainConfig, params: ModelParams, data: &Dataset) -> Result<(ModelParams, TrainReport), TrainingError> {
    let augmented;
    let data = match &cfg.augment {
        Some(spec) => {
            augmented = augment(data, spec, cfg.seed)?;
            &augmented
        }
        None => data,
    };
    let splits = data.manifest.splits;
    let train = prepare_split(&params.config, data, splits.train_range())?;
    let val = prepare_split(&params.config, data, splits.validation_range())?;
    fit_prepared(cfg, params, &train, &val, |_| {})
}

/// The fitting loop: Adam on shuffled batches, step decay of the learning
/// rate, validation only when the epoch's training loss improves on the best
/// so far, and early stopping `patience` epochs after the last validation
/// improvement.
pub fn fit_prepared(
    cfg: &TrainConfig,
    mut params: ModelParams,
    train: &PreparedSet,
    val: &PreparedSet,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, TrainReport), TrainingError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainingError::Config(format!(
            "training needs non-empty train ({}) and validation ({}) splits",
            train.len(),
            val.len()
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
        params.named().into_iter().map(|(_, t)| t),
    );
    let batch = cfg.batch_size.unwrap_or(train.len()).min(train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_train = f64::INFINITY;
    let mut best_val: Option<f64> = None;
    let mut best_epoch: Option<usize> = None;
    let mut best_params = params.clone();
    let mut report = TrainReport {
        config: cfg.clone(),
        architecture: params.architecture(),
        num_params: params.num_params(),
        n_train: train.len(),
        n_validation: val.len(),
        epochs: Vec::new(),
        best_epoch: None,
        best_validation_error: None,
        stop: StopReason::MaxEpochs,
        wall_time_secs: 0.0,
        checkpoint: None,
    };
    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        adam.set_lr(lr);
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut error = 0.0;
        for chunk in order.chunks(batch) {
            let preps: Vec<&PreparedSample> = chunk.iter().map(|&i| &train.preps[i]).collect();
            let targets: Vec<&Tensor> = chunk.iter().map(|&i| &train.targets[i]).collect();
            let lg = loss_and_grad(&params, &preps, &targets, cfg.regularization)?;
            let frac = chunk.len() as f64 / train.len() as f64;
            loss += frac * lg.loss;
            error += frac * lg.error;
            if !lg.loss.is_finite() || lg.grads.iter().any(|g| !g.is_finite()) {
                break;
            }
            adam.step(&mut params.tensors_mut(), &lg.grads)?;
        }
        let mut record = EpochRecord {
            epoch,
            lr,
            train_loss: loss,
            train_error: error,
            validation_error: None,
        };
        if !loss.is_finite() || !params.named().iter().all(|(_, t)| t.is_finite()) {
            report.epochs.push(record);
            report.stop = StopReason::Diverged;
            report.best_epoch = best_epoch;
            report.best_validation_error = best_val;
            report.wall_time_secs = start.elapsed().as_secs_f64();
            return Err(TrainingError::Diverged {
                epoch,
                loss,
                report: Box::new(report),
            });
        }
        if loss < best_train {
            best_train = loss;
            // The loss was measured before this epoch's steps; validate the
            // parameters as they stand now.
            let v = val.mean_error(&params)?;
            record.validation_error = Some(v);
            if best_val.is_none_or(|b| v < b) {
                best_val = Some(v);
                best_epoch = Some(epoch);
                best_params = params.clone();
            }
        }
        on_epoch(&record);
        report.epochs.push(record);
        let since = epoch - best_epoch.unwrap_or(0);
        if best_epoch.is_some() && since >= cfg.patience {
            report.stop = StopReason::Patience;
            break;
        }
    }
    report.best_epoch = best_epoch;
    report.best_validation_error = best_val;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((best_params, report))
}

/// Parameters for an `L̃`-layer model initialized from a trained `L`-layer
/// one. All tensors are shared across layers, so they carry over verbatim;
/// `τ` is rescaled so that `L·τ` is unchanged.
pub fn shallow_to_deep(params: &ModelParams, layers: usize) -> Result<ModelParams, TrainingError> {
    let l = params.config.layers;
    if layers < l {
        return Err(TrainingError::Config(format!(
            "target depth {layers} is shallower than the trained depth {l}"
        )));
    }
    let mut out = params.clone();
    out.config.layers = layers;
    out.config.tau = params.config.tau * l as f64 / layers as f64;
    out.config.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, ChannelLayout, Rect};

    fn small(arch: Architecture) -> OperatorConfig {
        let mut c = OperatorConfig::new(arch, ChannelLayout::scalar(1), ChannelLayout::scalar(1));
        c.set_hidden(4);
        c.kernel_hidden = vec![6];
        c
    }

    /// Targets `u = 1 + 0.3·f` on a 4×4 grid.
    fn toy_sets(cfg: &OperatorConfig, n_train: usize, n_val: usize) -> (PreparedSet, PreparedSet) {
        let cloud = make_grid(4, 4, Rect::UNIT).unwrap();
        let make = |offset: usize, n: usize| {
            let mut preps = Vec::new();
            let mut targets = Vec::new();
            for s in offset..offset + n {
                let f = Tensor::new(vec![16, 1], (0..16).map(|k| ((k * 3 + s * 7) as f64 * 0.37).sin()).collect()).unwrap();
                let u = f.map(|v| 1.0 + 0.3 * v);
                preps.push(prepare(cfg, &cloud, &f).unwrap());
                targets.push(u);
            }
            PreparedSet { preps, targets }
        };
        (make(0, n_train), make(100, n_val))
    }

    #[test]
    fn lr_schedule_steps_every_interval() {
        let cfg = TrainConfig {
            lr: 1e-3,
            decay: 0.5,
            ..Default::default()
        };
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert_eq!(cfg.lr_at(49), 1e-3);
        assert_eq!(cfg.lr_at(50), 5e-4);
        assert_eq!(cfg.lr_at(149), 2.5e-4);
        assert_eq!(cfg.lr_at(150), 1.25e-4);
    }

    #[test]
    fn config_invariants() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { patience: 2000, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { decay: 1.5, ..Default::default() },
            TrainConfig { batch_size: Some(0), ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn training_reduces_error_and_keeps_best() {
        let oc = small(Architecture::InoScalar);
        let (train, val) = toy_sets(&oc, 4, 2);
        let params = ModelParams::init(&oc, 1).unwrap();
        let cfg = TrainConfig {
            lr: 1e-2,
            max_epochs: 80,
            patience: 30,
            regularization: 0.0,
            ..Default::default()
        };
        let initial_val = val.mean_error(&params).unwrap();
        let (best, report) = fit_prepared(&cfg, params, &train, &val, |_| {}).unwrap();
        assert!(report.last_train_error().unwrap() < report.epochs[0].train_error);
        let best_val = report.best_validation_error.unwrap();
        assert!(best_val < initial_val);
        // Retained parameters reproduce the best validation error, which is
        // the minimum over every validated epoch.
        assert!((val.mean_error(&best).unwrap() - best_val).abs() < 1e-12);
        let min = report.epochs.iter().filter_map(|e| e.validation_error).fold(f64::INFINITY, f64::min);
        assert_eq!(min, best_val);
        // Validation only on epochs whose training loss set a new best.
        let mut best_train = f64::INFINITY;
        for e in &report.epochs {
            assert_eq!(e.validation_error.is_some(), e.train_loss < best_train);
            best_train = best_train.min(e.train_loss);
        }
        serde_json::from_str::<TrainReport>(&report.to_json()).unwrap();
    }

    #[test]
    fn stops_patience_epochs_after_last_improvement() {
        let oc = small(Architecture::InoScalar);
        let (train, val) = toy_sets(&oc, 2, 1);
        let params = ModelParams::init(&oc, 4).unwrap();
        // The learning rate halves every epoch, so the steps soon fall
        // below rounding and the loss stops improving.
        let cfg = TrainConfig {
            lr: 1e-9,
            decay: 0.5,
            decay_interval: 1,
            max_epochs: 400,
            patience: 7,
            regularization: 0.0,
            ..Default::default()
        };
        let (_, report) = fit_prepared(&cfg, params, &train, &val, |_| {}).unwrap();
        let k = report.best_epoch.unwrap();
        assert_eq!(report.stop, StopReason::Patience);
        assert_eq!(report.epochs.last().unwrap().epoch, k + 7);
        // The counter resets exactly at each validation improvement.
        let mut best = f64::INFINITY;
        let mut last = 0;
        for e in &report.epochs {
            if let Some(v) = e.validation_error {
                if v < best {
                    best = v;
                    last = e.epoch;
                }
            }
            assert!(e.epoch - last <= 7);
        }
        assert_eq!(last, k);
    }

    #[test]
    fn divergence_aborts_with_report() {
        let oc = small(Architecture::InoScalar);
        let (train, val) = toy_sets(&oc, 2, 1);
        let params = ModelParams::init(&oc, 4).unwrap();
        let cfg = TrainConfig {
            lr: 1e300,
            max_epochs: 50,
            patience: 10,
            ..Default::default()
        };
        match fit_prepared(&cfg, params, &train, &val, |_| {}) {
            Err(TrainingError::Diverged { report, .. }) => {
                assert_eq!(report.stop, StopReason::Diverged);
                assert!(!report.epochs.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let oc = small(Architecture::Gno);
        let (train, val) = toy_sets(&oc, 3, 1);
        let cfg = TrainConfig {
            max_epochs: 5,
            patience: 3,
            batch_size: Some(2),
            seed: 9,
            ..Default::default()
        };
        let run = || fit_prepared(&cfg, ModelParams::init(&oc, 2).unwrap(), &train, &val, |_| {}).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra.epochs, rb.epochs);
    }

    #[test]
    fn shallow_to_deep_preserves_horizon() {
        let oc = small(Architecture::InoScalar);
        let p = ModelParams::init(&oc, 0).unwrap();
        let same = shallow_to_deep(&p, 4).unwrap();
        assert_eq!(same, p);
        let deep = shallow_to_deep(&p, 8).unwrap();
        assert_eq!(deep.config.layers, 8);
        assert_eq!(deep.config.tau, 0.125);
        for ((n1, t1), (n2, t2)) in p.named().into_iter().zip(deep.named()) {
            assert_eq!((n1, t1), (n2, t2));
        }
        assert!(shallow_to_deep(&p, 2).is_err());
    }

    #[test]
    fn position_targets_add_coordinates() {
        use crate::geometry::FunctionSample;
        let cloud = make_grid(3, 3, Rect::UNIT).unwrap();
        let f = Tensor::new(vec![9, 3], (0..27).map(|k| k as f64 * 0.01).collect()).unwrap();
        let u = Tensor::new(vec![9, 2], (0..18).map(|k| k as f64 * 0.1).collect()).unwrap();
        let ds = Dataset::new(
            "lps",
            0,
            "vector2,scalar".parse().unwrap(),
            "vector2".parse().unwrap(),
            crate::datagen::Splits { train: 1, validation: 0, test: 0 },
            cloud.clone(),
            vec![FunctionSample { f, u: u.clone() }],
            toml::Table::new(),
        )
        .unwrap();
        let mut oc = OperatorConfig::new(
            Architecture::InoVectorPosition,
            "vector2,scalar".parse().unwrap(),
            "point2".parse().unwrap(),
        );
        oc.set_hidden(2);
        oc.kernel_hidden = vec![3];
        let set = prepare_split(&oc, &ds, 0..1).unwrap();
        for k in 0..9 {
            assert_eq!(set.targets[0].get2(k, 0), u.get2(k, 0) + cloud.coords()[k][0]);
        }
        oc.architecture = Architecture::InoVector;
        oc.u_layout = "vector2".parse().unwrap();
        assert_eq!(prepare_split(&oc, &ds, 0..1).unwrap().targets[0], u);
    }
}
