use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::diffcore::Tensor;
use crate::geometry::{apply_transform, FrameTransform, FunctionSample, PointCloud};
use crate::operators::{forward, Architecture, ModelParams};

/// How the output should respond to a change of frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// `G[f̃](Rx+g) = G[f](x)`.
    Invariant,
    /// `G[f̃](Rx+g) = R·G[f](x)`.
    Displacement,
    /// `G[f̃](Rx+g) = R·G[f](x) + g`.
    Position,
}

/// Equivariant output variant of the coordinate-tracking operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Displacement,
    Position,
}

/// Rotation `θ ∼ U[0, 2π)` after a translation with `|g| ≤ 2`.
pub fn random_frame(rng: &mut impl Rng) -> FrameTransform {
    let rot = FrameTransform::rotation(rng.random_range(0.0..2.0 * PI));
    let s = 2.0 / 2f64.sqrt();
    let g = [rng.random_range(-s..=s), rng.random_range(-s..=s)];
    rot.after(&FrameTransform::translation(g))
}

fn expected(u: &Tensor, expect: Expectation, t: &FrameTransform) -> Result<Tensor, EvalError> {
    let mut out = u.clone();
    match expect {
        Expectation::Invariant => {}
        Expectation::Displacement | Expectation::Position => {
            if u.cols() != 2 {
                return Err(EvalError::Config(format!("{expect:?} check needs a 2-column output, got {}", u.cols())));
            }
            for i in 0..u.rows() {
                let p = [u.get2(i, 0), u.get2(i, 1)];
                let q = if expect == Expectation::Position { t.apply_point(p) } else { t.rotate(p) };
                out.row_mut(i).copy_from_slice(&q);
            }
        }
    }
    Ok(out)
}

fn deviation(got: &Tensor, want: &Tensor) -> f64 {
    got.data()
        .iter()
        .zip(want.data())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / (1.0 + b.abs())))
}

/// `max |G(transformed) − expected| / (1 + |expected|)` over all output
/// entries for one frame change.
pub fn frame_deviation(
    params: &ModelParams,
    cloud: &PointCloud,
    f: &Tensor,
    t: &FrameTransform,
    expect: Expectation,
) -> Result<f64, EvalError> {
    let u0 = forward(params, cloud, f)?;
    deviation_from(params, cloud, f, &u0, t, expect)
}

fn deviation_from(
    params: &ModelParams,
    cloud: &PointCloud,
    f: &Tensor,
    u0: &Tensor,
    t: &FrameTransform,
    expect: Expectation,
) -> Result<f64, EvalError> {
    let layout = &params.config.f_layout;
    let sample = FunctionSample { f: f.clone(), u: f.clone() };
    let (tc, ts) = apply_transform(cloud, &sample, t, layout, layout)?;
    let ut = forward(params, &tc, &ts.f)?;
    Ok(deviation(&ut, &expected(u0, expect, t)?))
}

fn max_over_trials(
    params: &ModelParams,
    cloud: &PointCloud,
    f: &Tensor,
    trials: usize,
    seed: u64,
    expect: Expectation,
) -> Result<f64, EvalError> {
    let u0 = forward(params, cloud, f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let t = random_frame(&mut rng);
        worst = worst.max(deviation_from(params, cloud, f, &u0, &t, expect)?);
    }
    Ok(worst)
}

/// Largest invariance deviation over `trials` random frames. Any
/// architecture with a scalar projection head may be checked, so the
/// baseline can serve as a negative control.
pub fn check_invariance(params: &ModelParams, cloud: &PointCloud, f: &Tensor, trials: usize, seed: u64) -> Result<f64, EvalError> {
    let arch = params.config.architecture;
    if arch.tracks_coordinates() {
        return Err(EvalError::Config(format!("{arch} has a vector output; use the equivariance check")));
    }
    max_over_trials(params, cloud, f, trials, seed, Expectation::Invariant)
}

/// Largest equivariance deviation over `trials` random frames.
pub fn check_equivariance(
    params: &ModelParams,
    cloud: &PointCloud,
    f: &Tensor,
    trials: usize,
    seed: u64,
    variant: Variant,
) -> Result<f64, EvalError> {
    let arch = params.config.architecture;
    let (want, expect) = match variant {
        Variant::Displacement => (Architecture::InoVector, Expectation::Displacement),
        Variant::Position => (Architecture::InoVectorPosition, Expectation::Position),
    };
    if arch != want {
        return Err(EvalError::Config(format!("{variant:?} variant needs architecture {want}, model is {arch}")));
    }
    max_over_trials(params, cloud, f, trials, seed, expect)
}

/// Deviation under the reflection `(x, y) ↦ (x, −y)`. Reported only: the
/// signed edge angle flips under reflections.
pub fn check_reflection(params: &ModelParams, cloud: &PointCloud, f: &Tensor) -> Result<f64, EvalError> {
    let expect = match params.config.architecture {
        Architecture::InoVector => Expectation::Displacement,
        Architecture::InoVectorPosition => Expectation::Position,
        _ => Expectation::Invariant,
    };
    frame_deviation(params, cloud, f, &FrameTransform::reflection(), expect)
}
