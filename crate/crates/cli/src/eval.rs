use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use ino::datagen::read_dataset;
use ino::evaluation::{
    check_equivariance, check_invariance, check_reflection, emit_report, evaluate, frame_deviation, resolution_transfer,
    transform_sweep, EvalReport, Expectation, ReportFormat, ReportMeta, Split, SplitError, SweepSpec, TheoremCheck, Variant,
};
use ino::geometry::{FrameTransform, TransformMode};
use ino::operators::{load_checkpoint, Architecture};

use crate::config::{parse_list, require, ExperimentConfig};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = |s: &str| s.parse::<Split>().map_err(|e| e.to_string()))]
    split: Split,
    /// Frame-change sweep over the split.
    #[arg(long, value_parser = |s: &str| s.parse::<TransformMode>())]
    sweep: Option<TransformMode>,
    /// Sweep ranges `C`; defaults depend on the mode.
    #[arg(long = "Cs", value_parser = parse_list::<f64>)]
    ranges: Option<std::vec::Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Invariance/equivariance checks on the first sample of the split.
    #[arg(long)]
    check_theorems: bool,
    /// Random frames per check.
    #[arg(long, default_value_t = 20)]
    check_trials: usize,
    /// Second dataset of the same problem at another resolution.
    #[arg(long)]
    cross_res: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for `report.json` and `sweep.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

const THEOREM_TOL: f64 = 1e-10;

fn theorem_checks(params: &ino::operators::ModelParams, data: &ino::datagen::Dataset, split: Split, trials: usize, seed: u64) -> Result<Vec<TheoremCheck>> {
    let i = split.range(data).start;
    let cloud = data.cloud_for(i);
    let f = &data.samples[i].f;
    let arch = params.config.architecture;
    let mut checks = Vec::new();
    match arch {
        Architecture::InoVector => checks.push(TheoremCheck {
            name: "equivariance (displacement)".into(),
            max_deviation: check_equivariance(params, cloud, f, trials, seed, Variant::Displacement)?,
            tolerance: Some(THEOREM_TOL),
        }),
        Architecture::InoVectorPosition => checks.push(TheoremCheck {
            name: "equivariance (position)".into(),
            max_deviation: check_equivariance(params, cloud, f, trials, seed, Variant::Position)?,
            tolerance: Some(THEOREM_TOL),
        }),
        a => checks.push(TheoremCheck {
            name: "invariance".into(),
            max_deviation: check_invariance(params, cloud, f, trials, seed)?,
            tolerance: (a != Architecture::Gno).then_some(THEOREM_TOL),
        }),
    }
    if !arch.tracks_coordinates() {
        checks.push(TheoremCheck {
            name: "quarter turn".into(),
            max_deviation: frame_deviation(params, cloud, f, &FrameTransform::rotation(PI / 2.0), Expectation::Invariant)?,
            tolerance: None,
        });
    }
    checks.push(TheoremCheck {
        name: "reflection".into(),
        max_deviation: check_reflection(params, cloud, f)?,
        tolerance: None,
    });
    Ok(checks)
}

pub fn run(a: EvalArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    if a.checkpoint.is_some() {
        cfg.paths.checkpoint = a.checkpoint.clone();
    }
    if a.data.is_some() {
        cfg.paths.data = a.data.clone();
    }
    if a.out.is_some() {
        cfg.paths.out = a.out.clone();
    }
    if let Some(mode) = a.sweep {
        let mut spec = SweepSpec::standard(mode, a.trials, cfg.train.seed);
        if let Some(r) = &a.ranges {
            spec.ranges = r.clone();
        }
        cfg.sweep = Some(spec);
    }
    let ck = require(&cfg.paths.checkpoint, "checkpoint directory (--checkpoint)")?;
    let data_dir = require(&cfg.paths.data, "dataset directory (--data)")?;
    let params = load_checkpoint(&ck)?;
    let data = read_dataset(&data_dir)?;
    let seed = cfg.train.seed;
    let mut report = EvalReport::new(ReportMeta {
        checkpoint: ck.display().to_string(),
        dataset: data_dir.display().to_string(),
        seed,
    });
    let err = evaluate(&params, &data, a.split)?;
    println!("{} error on {} ({}): {err:.6}", params.config.architecture, data_dir.display(), a.split);
    report.errors.push(SplitError {
        dataset: data_dir.display().to_string(),
        split: a.split,
        error: err,
    });
    if let Some(spec) = &cfg.sweep {
        let curve = transform_sweep(&params, &data, a.split, spec)?;
        for (c, e) in curve.means() {
            println!("sweep {:?} C = {c:.6}: mean error {e:.6}", spec.mode);
        }
        report.sweeps.push(curve);
    }
    if a.check_theorems {
        for c in theorem_checks(&params, &data, a.split, a.check_trials, seed)? {
            let verdict = match c.tolerance {
                Some(t) if c.max_deviation <= t => format!("pass (≤ {t:e})"),
                Some(t) => format!("FAIL (> {t:e})"),
                None => "reported".into(),
            };
            println!("check {}: max deviation {:.3e} {verdict}", c.name, c.max_deviation);
            report.checks.push(c);
        }
    }
    if let Some(dir) = &a.cross_res {
        let other = read_dataset(dir)?;
        let row = resolution_transfer(&params, &data, &other, a.split)?;
        println!("nodes | error");
        println!("{:>5} | {:.6}", row.source_nodes, row.source_error);
        println!("{:>5} | {:.6}   (ratio {:.3})", row.target_nodes, row.target_error, row.ratio());
        report.transfer.push(row);
    }
    if let Some(out) = &cfg.paths.out {
        cfg.echo(out)?;
        fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
        emit_report(&report, &out.join("report.json"), ReportFormat::Json)?;
        emit_report(&report, &out.join("sweep.csv"), ReportFormat::Csv)?;
    }
    if report.checks.iter().any(|c| !c.passed()) {
        anyhow::bail!("a frame-change check exceeded its tolerance");
    }
    Ok(())
}
