use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::datagen::Dataset;
use crate::operators::{forward, ModelParams};
use crate::training::{check_layouts, output_target, relative_l2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
    /// Every sample of the dataset.
    All,
}

impl Split {
    pub fn range(self, data: &Dataset) -> Range<usize> {
        let s = data.manifest.splits;
        match self {
            Split::Train => s.train_range(),
            Split::Validation => s.validation_range(),
            Split::Test => s.test_range(),
            Split::All => 0..data.len(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::All => "all",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Split::Train, Split::Validation, Split::Test, Split::All]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| EvalError::Config(format!("unknown split `{s}`")))
    }
}

/// Relative error of every sample in `split`, in order.
pub fn sample_errors(params: &ModelParams, data: &Dataset, split: Split) -> Result<Vec<f64>, EvalError> {
    let config = &params.config;
    check_layouts(config, &data.manifest.f_layout, &data.manifest.u_layout)?;
    let range = split.range(data);
    if range.is_empty() {
        return Err(EvalError::Config(format!("{split} split is empty")));
    }
    range
        .into_par_iter()
        .map(|i| {
            let cloud = data.cloud_for(i);
            let s = &data.samples[i];
            let pred = forward(params, cloud, &s.f)?;
            Ok(relative_l2(&pred, &output_target(config, &data.manifest.u_layout, cloud, &s.u))?)
        })
        .collect()
}

/// Mean relative error over `split`.
pub fn evaluate(params: &ModelParams, data: &Dataset, split: Split) -> Result<f64, EvalError> {
    let e = sample_errors(params, data, split)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// One checkpoint evaluated on two discretizations of the same problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub split: Split,
    pub source_nodes: usize,
    pub source_error: f64,
    pub target_nodes: usize,
    pub target_error: f64,
}

impl TransferRow {
    pub fn ratio(&self) -> f64 {
        self.target_error / self.source_error
    }
}

pub fn resolution_transfer(params: &ModelParams, source: &Dataset, target: &Dataset, split: Split) -> Result<TransferRow, EvalError> {
    if source.manifest.f_layout != target.manifest.f_layout || source.manifest.u_layout != target.manifest.u_layout {
        return Err(EvalError::Config(format!(
            "datasets have different layouts: `{}` -> `{}` and `{}` -> `{}`",
            source.manifest.f_layout, source.manifest.u_layout, target.manifest.f_layout, target.manifest.u_layout
        )));
    }
    Ok(TransferRow {
        split,
        source_nodes: source.cloud.len(),
        source_error: evaluate(params, source, split)?,
        target_nodes: target.cloud.len(),
        target_error: evaluate(params, target, split)?,
    })
}
