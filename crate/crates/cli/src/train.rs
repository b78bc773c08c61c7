use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use ino::datagen::read_dataset;
use ino::operators::{load_checkpoint, save_checkpoint, Architecture, ModelParams};
use ino::training::{
    augment, fit_normalizer, fit_prepared, prepare_split, shallow_to_deep, AugmentSpec, TrainReport, TrainingError,
};

use crate::config::{parse_list, require, ExperimentConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset or collection directory (a collection uses its first member).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<Architecture>().map_err(|e| e.to_string()))]
    arch: Option<Architecture>,
    /// Number of layers; `τ = 1/L`.
    #[arg(long = "L")]
    layers: Option<usize>,
    /// Hidden width `d_h`.
    #[arg(long)]
    dh: Option<usize>,
    /// Kernel network hidden widths, e.g. `128,256`.
    #[arg(long, value_parser = parse_list::<usize>)]
    kernel: Option<std::vec::Vec<usize>>,
    /// Integration radius; omitted integrates over the whole cloud.
    #[arg(long)]
    radius: Option<f64>,
    /// `d_h = 64`, kernel widths `512,1024`.
    #[arg(long)]
    paper_scale: bool,
    /// Feed raw values instead of normalized ones.
    #[arg(long)]
    no_normalize: bool,
    /// Use only the first N training samples.
    #[arg(long)]
    ntrain: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    decay_interval: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Start from a trained checkpoint; a larger `--L` deepens it.
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// Transformed copies per training sample.
    #[arg(long)]
    augment: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    aug_translate: f64,
    #[arg(long, default_value_t = 0.0)]
    aug_rotate: f64,
    /// Print every N-th epoch.
    #[arg(long, default_value_t = 50)]
    log_every: usize,
}

fn apply(a: &TrainArgs, cfg: &mut ExperimentConfig) {
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    let p = &mut cfg.paths;
    if a.data.is_some() {
        p.data = a.data.clone();
    }
    if a.out.is_some() {
        p.out = a.out.clone();
    }
    if a.init_from.is_some() {
        p.checkpoint = a.init_from.clone();
    }
    let o = &mut cfg.operator;
    if let Some(v) = a.arch {
        o.architecture = v;
    }
    if let Some(v) = a.layers {
        o.layers = v;
    }
    if let Some(v) = a.dh {
        o.hidden = v;
    }
    if let Some(v) = &a.kernel {
        o.kernel_hidden = Some(v.clone());
    }
    if a.radius.is_some() {
        o.radius = a.radius;
    }
    o.paper_scale |= a.paper_scale;
    o.normalize &= !a.no_normalize;
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.max_epochs = v;
        if a.patience.is_none() && t.patience >= v {
            t.patience = v.saturating_sub(1).max(1);
        }
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.decay {
        t.decay = v;
    }
    if let Some(v) = a.decay_interval {
        t.decay_interval = v;
    }
    if let Some(v) = a.reg {
        t.regularization = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if a.batch_size.is_some() {
        t.batch_size = a.batch_size;
    }
    if let Some(count) = a.augment {
        t.augment = Some(AugmentSpec {
            count,
            translate: a.aug_translate,
            rotate: a.aug_rotate,
        });
    }
}

fn write_report(report: &TrainReport, path: &std::path::Path) -> Result<()> {
    fs::write(path, report.to_json()).with_context(|| format!("cannot write {}", path.display()))
}

pub fn run(a: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(a.config.as_deref())?;
    apply(&a, &mut cfg);
    let data_dir = require(&cfg.paths.data, "dataset directory (--data)")?;
    let out = require(&cfg.paths.out, "output directory (--out)")?;
    let mut data = read_dataset(&data_dir)?;
    if let Some(n) = a.ntrain {
        data = data.with_train_count(n)?;
    }
    let (lf, lu) = (&data.manifest.f_layout, &data.manifest.u_layout);
    let params = match &cfg.paths.checkpoint {
        Some(dir) => {
            let base = load_checkpoint(dir)?;
            if base.config.architecture != cfg.operator.architecture {
                bail!(
                    "checkpoint {} holds a {} model, training asked for {}",
                    dir.display(),
                    base.config.architecture,
                    cfg.operator.architecture
                );
            }
            let p = if cfg.operator.layers > base.config.layers { shallow_to_deep(&base, cfg.operator.layers)? } else { base };
            cfg.operator.layers = p.config.layers;
            p
        }
        None => {
            let mut oc = cfg.operator.build(lf, lu);
            if cfg.operator.normalize {
                oc.normalizer = Some(fit_normalizer(&oc, &data)?);
            }
            ModelParams::init(&oc, cfg.train.seed)?
        }
    };
    cfg.train.validate()?;
    cfg.echo(&out)?;
    let augmented;
    let train_data = match &cfg.train.augment {
        Some(spec) => {
            augmented = augment(&data, spec, cfg.train.seed)?;
            &augmented
        }
        None => &data,
    };
    let sp = train_data.manifest.splits;
    let train = prepare_split(&params.config, train_data, sp.train_range())?;
    let val = prepare_split(&params.config, train_data, sp.validation_range())?;
    eprintln!(
        "training {} ({} parameters) on {} samples, validating on {}",
        params.config.architecture,
        params.num_params(),
        train.len(),
        val.len()
    );
    let every = a.log_every.max(1);
    let result = fit_prepared(&cfg.train, params, &train, &val, |e| {
        if e.epoch % every == 0 {
            eprintln!("epoch {:>5}  lr {:.3e}  train {:.5}  validation {:?}", e.epoch, e.lr, e.train_error, e.validation_error);
        }
    });
    let report_path = out.join("report.json");
    match result {
        Ok((best, mut report)) => {
            let ck = out.join("checkpoint");
            save_checkpoint(&best, &ck)?;
            report.checkpoint = Some(ck.display().to_string());
            write_report(&report, &report_path)?;
            println!(
                "{}: {} epochs ({:?}), best epoch {:?}, validation error {:?}, checkpoint {}",
                report.architecture,
                report.epochs.len(),
                report.stop,
                report.best_epoch,
                report.best_validation_error,
                ck.display()
            );
            Ok(())
        }
        Err(TrainingError::Diverged { epoch, loss, report }) => {
            write_report(&report, &report_path)?;
            bail!("training diverged at epoch {epoch} (loss {loss}); partial report in {}", report_path.display())
        }
        Err(e) => Err(e.into()),
    }
}
