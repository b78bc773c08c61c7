use rayon::prelude::*;

use super::TrainingError;
use crate::diffcore::{Tape, Tensor, Var};
use crate::operators::{forward_on_tape, ModelParams, PreparedSample};

fn rms(t: &Tensor) -> f64 {
    (t.sum_squares() / t.rows().max(1) as f64).sqrt()
}

/// `‖pred − truth‖ / ‖truth‖` with the root-mean-square norm over nodes.
pub fn relative_l2(pred: &Tensor, truth: &Tensor) -> Result<f64, TrainingError> {
    if pred.shape() != truth.shape() {
        return Err(TrainingError::Config(format!(
            "prediction shape {:?} differs from reference {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let denom = rms(truth);
    if denom == 0.0 {
        return Err(TrainingError::ZeroNorm);
    }
    let diff: f64 = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((diff / truth.rows().max(1) as f64).sqrt() / denom)
}

/// Differentiable [`relative_l2`] of a prediction on the tape.
pub fn relative_l2_on_tape(tape: &Tape, pred: &Var, truth: &Tensor) -> Result<Var, TrainingError> {
    let denom = rms(truth);
    if denom == 0.0 {
        return Err(TrainingError::ZeroNorm);
    }
    let t = tape.constant(truth.clone());
    let diff = tape.sub(pred, &t)?;
    let norm = tape.l2norm(&diff)?;
    Ok(tape.scale(&norm, 1.0 / (denom * (truth.rows().max(1) as f64).sqrt()))?)
}

/// Loss value and its gradient in the order of [`ModelParams::named`].
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    /// Mean relative error plus the penalty.
    pub loss: f64,
    /// Mean relative error alone.
    pub error: f64,
    pub grads: Vec<Tensor>,
}

fn check_batch(preps: &[&PreparedSample], targets: &[&Tensor]) -> Result<(), TrainingError> {
    if preps.is_empty() || preps.len() != targets.len() {
        return Err(TrainingError::Config(format!(
            "batch needs matching non-empty inputs, got {} inputs and {} targets",
            preps.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// `(1/N)·Σ‖G[f_i] − u_i‖/‖u_i‖ + coef·Σθ²` recorded on a single tape.
pub fn batch_loss(params: &ModelParams, preps: &[&PreparedSample], targets: &[&Tensor], coef: f64) -> Result<LossAndGrad, TrainingError> {
    check_batch(preps, targets)?;
    let tape = Tape::new();
    let vars = params.to_vars(&tape);
    let mut sum: Option<Var> = None;
    for (p, t) in preps.iter().zip(targets) {
        let pred = forward_on_tape(&tape, &params.config, &vars, p)?;
        let rel = relative_l2_on_tape(&tape, &pred, t)?;
        sum = Some(match sum {
            Some(s) => tape.add(&s, &rel)?,
            None => rel,
        });
    }
    let mean = tape.scale(&sum.expect("non-empty batch"), 1.0 / preps.len() as f64)?;
    let error = mean.value().item()?;
    let mut squares: Option<Var> = None;
    for v in vars.all() {
        let sq = tape.sum(&tape.mul(v, v)?)?;
        squares = Some(match squares {
            Some(s) => tape.add(&s, &sq)?,
            None => sq,
        });
    }
    let pen = tape.scale(&squares.expect("parameters"), coef)?;
    let total = tape.add(&mean, &pen)?;
    let grads = tape.backward(&total)?;
    Ok(LossAndGrad {
        loss: total.value().item()?,
        error,
        grads: vars.all().into_iter().map(|v| grads.wrt(v)).collect(),
    })
}

/// Same value and gradient as [`batch_loss`], computed with one tape per
/// sample (concurrently) and reduced in sample order.
pub fn loss_and_grad(params: &ModelParams, preps: &[&PreparedSample], targets: &[&Tensor], coef: f64) -> Result<LossAndGrad, TrainingError> {
    check_batch(preps, targets)?;
    let n = preps.len() as f64;
    let per_sample: Vec<(f64, Vec<Tensor>)> = preps
        .par_iter()
        .zip(targets.par_iter())
        .map(|(p, t)| {
            let tape = Tape::new();
            let vars = params.to_vars(&tape);
            let pred = forward_on_tape(&tape, &params.config, &vars, p)?;
            let rel = relative_l2_on_tape(&tape, &pred, t)?;
            let g = tape.backward(&rel)?;
            Ok((rel.value().item()?, vars.all().into_iter().map(|v| g.wrt(v)).collect()))
        })
        .collect::<Result<_, TrainingError>>()?;
    let named = params.named();
    let mut grads: Vec<Tensor> = named.iter().map(|(_, t)| t.map(|v| 2.0 * coef * v)).collect();
    let mut error = 0.0;
    for (e, g) in &per_sample {
        error += e / n;
        for (acc, gi) in grads.iter_mut().zip(g) {
            acc.axpy(1.0 / n, gi);
        }
    }
    Ok(LossAndGrad {
        loss: error + coef * params.sum_squares(),
        error,
        grads,
    })
}
