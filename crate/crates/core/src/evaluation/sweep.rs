use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{sample_errors, Split};
use super::EvalError;
use crate::datagen::Dataset;
use crate::geometry::{apply_transform, random_transform, TransformMode};
use crate::operators::{forward, ModelParams};
use crate::training::{check_layouts, output_target, relative_l2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: TransformMode,
    /// Ranges `C`, non-negative and ascending.
    pub ranges: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl SweepSpec {
    /// `C ∈ {0, 0.25, 0.5, 1}` for translations, `{0, π/4, π/2, π, 2π}` for
    /// rotations.
    pub fn standard(mode: TransformMode, trials: usize, seed: u64) -> Self {
        let ranges = match mode {
            TransformMode::Translate => vec![0.0, 0.25, 0.5, 1.0],
            TransformMode::Rotate => vec![0.0, PI / 4.0, PI / 2.0, PI, 2.0 * PI],
        };
        Self { mode, ranges, trials, seed }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.trials == 0 {
            return Err(EvalError::Config("sweep needs at least one trial".into()));
        }
        if self.ranges.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(EvalError::Config(format!("sweep ranges must be finite and non-negative: {:?}", self.ranges)));
        }
        if self.ranges.windows(2).any(|w| w[1] < w[0]) {
            return Err(EvalError::Config(format!("sweep ranges must ascend: {:?}", self.ranges)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub range: f64,
    pub trial: usize,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub spec: SweepSpec,
    pub split: Split,
    /// One point per `(C, trial)`, ranges outermost.
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// Mean over trials at each range.
    pub fn means(&self) -> Vec<(f64, f64)> {
        self.spec
            .ranges
            .iter()
            .map(|&c| {
                let e: Vec<f64> = self.points.iter().filter(|p| p.range == c).map(|p| p.mean_error).collect();
                (c, e.iter().sum::<f64>() / e.len().max(1) as f64)
            })
            .collect()
    }
}

fn task_rng(seed: u64, range_idx: usize, trial: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((range_idx as u64) << 48) ^ ((trial as u64) << 32));
    rng.set_stream(sample as u64);
    rng
}

/// Mean error over `split` with every sample moved into its own random
/// frame drawn from range `C`.
pub fn transform_sweep(params: &ModelParams, data: &Dataset, split: Split, spec: &SweepSpec) -> Result<SweepCurve, EvalError> {
    spec.validate()?;
    let config = &params.config;
    let (lf, lu) = (&data.manifest.f_layout, &data.manifest.u_layout);
    check_layouts(config, lf, lu)?;
    let range = split.range(data);
    if range.is_empty() {
        return Err(EvalError::Config(format!("{split} split is empty")));
    }
    let mut points = Vec::with_capacity(spec.ranges.len() * spec.trials);
    for (ci, &c) in spec.ranges.iter().enumerate() {
        for trial in 0..spec.trials {
            let errors: Vec<f64> = if c == 0.0 {
                sample_errors(params, data, split)?
            } else {
                range
                    .clone()
                    .into_par_iter()
                    .map(|i| {
                        let t = random_transform(c, spec.mode, &mut task_rng(spec.seed, ci, trial, i));
                        let (cloud, s) = apply_transform(data.cloud_for(i), &data.samples[i], &t, lf, lu)?;
                        let pred = forward(params, &cloud, &s.f)?;
                        Ok(relative_l2(&pred, &output_target(config, lu, &cloud, &s.u))?)
                    })
                    .collect::<Result<_, EvalError>>()?
            };
            points.push(SweepPoint {
                range: c,
                trial,
                mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            });
        }
    }
    Ok(SweepCurve {
        spec: spec.clone(),
        split,
        points,
    })
}
