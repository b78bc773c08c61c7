use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ino::diffcore::{GradCheckOptions, Tensor};
use ino::geometry::{ChannelKind, ChannelLayout, PointCloud};
use ino::operators::{gradient_check, load_checkpoint, Architecture, ModelParams, OperatorConfig};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "ino_scalar", value_parser = |s: &str| s.parse::<Architecture>().map_err(|e| e.to_string()))]
    arch: Architecture,
    /// Check a saved model instead of fresh parameters.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Cloud size.
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    dh: usize,
    #[arg(long = "L", default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

fn fresh(a: &GradcheckArgs) -> Result<ModelParams> {
    let (f, u) = match a.arch {
        Architecture::InoVector => ("vector2,scalar".parse()?, "vector2".parse()?),
        Architecture::InoVectorPosition => ("vector2,scalar".parse()?, "point2".parse()?),
        _ => (ChannelLayout::scalar(1), ChannelLayout::scalar(1)),
    };
    let mut c = OperatorConfig::new(a.arch, f, u);
    c.set_hidden(a.dh);
    c.set_layers(a.layers);
    c.kernel_hidden = vec![2 * a.dh];
    Ok(ModelParams::init(&c, a.seed)?)
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Tensor> {
    Ok(Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())?)
}

pub fn run(a: GradcheckArgs) -> Result<()> {
    let params = match &a.checkpoint {
        Some(dir) => load_checkpoint(dir)?,
        None => fresh(&a)?,
    };
    if params.config.f_layout.kinds().contains(&ChannelKind::Point2) {
        bail!("position-valued inputs are not supported by the checker");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0x9e37_79b9);
    let coords = (0..a.m).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let weights = (0..a.m).map(|_| rng.random_range(0.1..0.5)).collect();
    let cloud = PointCloud::new(coords, weights, (0, 1.min(a.m.saturating_sub(1))))?;
    let f = uniform(&mut rng, a.m, params.config.f_layout.width())?;
    let probe = uniform(&mut rng, a.m, params.config.u_layout.width())?;
    let opts = GradCheckOptions {
        tolerance: a.tolerance,
        ..Default::default()
    };
    let report = gradient_check(&params, &cloud, &f, &probe, &opts)?;
    for g in &report.groups {
        println!("{:<24} max relative error {:.3e}  {}", g.name, g.max_rel_error, if g.passed { "ok" } else { "FAIL" });
    }
    if !report.passed() {
        bail!("{} parameter group(s) exceed tolerance {:e}", report.failures().count(), a.tolerance);
    }
    println!("{}: all {} groups within {:e}", params.config.architecture, report.groups.len(), a.tolerance);
    Ok(())
}
