use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Subcommand};

use ino::datagen::{generate_darcy_collection, generate_lps_dataset, write_dataset, Dataset, Moduli, PhaseModuli};

use crate::config::{parse_list, require, ExperimentConfig};

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Debug, Subcommand)]
enum GenKind {
    /// Two-phase Darcy flow on the unit square, one dataset per resolution.
    Darcy(DarcyArgs),
    /// Peridynamic glass-ceramic disk under boundary displacement.
    Lps(LpsArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total samples, split 100:40:40 into train, validation and test.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_validation: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

#[derive(Debug, Args)]
struct DarcyArgs {
    #[command(flatten)]
    common: Common,
    /// Solver grid size.
    #[arg(long)]
    fine_resolution: Option<usize>,
    /// Output grid sizes, e.g. `16,31`.
    #[arg(long, value_parser = parse_list::<usize>)]
    resolutions: Option<std::vec::Vec<usize>>,
}

#[derive(Debug, Args)]
struct LpsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    spacing: Option<f64>,
    /// Opt into the placeholder moduli (not material data).
    #[arg(long, conflicts_with_all = ["glass_lambda", "glass_mu", "crystal_lambda", "crystal_mu"])]
    placeholder_moduli: bool,
    #[arg(long, requires_all = ["glass_mu", "crystal_lambda", "crystal_mu"])]
    glass_lambda: Option<f64>,
    #[arg(long)]
    glass_mu: Option<f64>,
    #[arg(long)]
    crystal_lambda: Option<f64>,
    #[arg(long)]
    crystal_mu: Option<f64>,
}

/// `100:40:40` proportions of `n`.
fn split_total(n: usize) -> (usize, usize, usize) {
    let validation = (n * 40 + 90) / 180;
    let test = validation.min(n - validation);
    (n - validation - test, validation, test)
}

fn apply_counts(c: &Common, train: &mut usize, validation: &mut usize, test: &mut usize) {
    if let Some(n) = c.n {
        (*train, *validation, *test) = split_total(n);
    }
    if let Some(v) = c.n_train {
        *train = v;
    }
    if let Some(v) = c.n_validation {
        *validation = v;
    }
    if let Some(v) = c.n_test {
        *test = v;
    }
}

fn summary(ds: &Dataset, dir: &Path) {
    let m = &ds.manifest;
    println!(
        "{}: problem {} | {} samples (train {}, validation {}, test {}) | {} nodes | f {} -> u {} | seed {}",
        dir.display(),
        m.problem,
        m.num_samples,
        m.splits.train,
        m.splits.validation,
        m.splits.test,
        ds.cloud.len(),
        m.f_layout,
        m.u_layout,
        m.seed
    );
}

pub fn run(args: GenArgs) -> Result<()> {
    match args.kind {
        GenKind::Darcy(a) => {
            let mut cfg = ExperimentConfig::load(a.common.config.as_deref())?;
            if let Some(s) = a.common.seed {
                cfg.set_seed(s);
            }
            if let Some(o) = &a.common.out {
                cfg.paths.out = Some(o.clone());
            }
            let d = &mut cfg.darcy;
            apply_counts(&a.common, &mut d.n_train, &mut d.n_validation, &mut d.n_test);
            if let Some(r) = a.fine_resolution {
                d.fine_resolution = r;
            }
            if let Some(r) = a.resolutions {
                d.resolutions = r;
            }
            let out = require(&cfg.paths.out, "output directory (--out)")?;
            let sets = generate_darcy_collection(&cfg.darcy, &out)?;
            cfg.echo(&out)?;
            println!("collection {}: resolutions {:?}", out.display(), cfg.darcy.resolutions);
            for (ds, r) in sets.iter().zip(&cfg.darcy.resolutions) {
                summary(ds, &out.join(format!("res{r}")));
            }
        }
        GenKind::Lps(a) => {
            let mut cfg = ExperimentConfig::load(a.common.config.as_deref())?;
            if let Some(s) = a.common.seed {
                cfg.set_seed(s);
            }
            if let Some(o) = &a.common.out {
                cfg.paths.out = Some(o.clone());
            }
            let l = &mut cfg.lps;
            apply_counts(&a.common, &mut l.n_train, &mut l.n_validation, &mut l.n_test);
            if let Some(h) = a.spacing {
                l.spacing = h;
            }
            if a.placeholder_moduli {
                l.moduli = Some(Moduli::placeholder());
            } else if let (Some(gl), Some(gm), Some(cl), Some(cm)) = (a.glass_lambda, a.glass_mu, a.crystal_lambda, a.crystal_mu) {
                l.moduli = Some(Moduli {
                    glass: PhaseModuli { lambda: gl, mu: gm },
                    crystal: PhaseModuli { lambda: cl, mu: cm },
                });
            }
            if l.moduli.is_none() {
                bail!(
                    "the peridynamic problem needs explicit moduli: pass --glass-lambda/--glass-mu/--crystal-lambda/--crystal-mu, \
                     set \"lps.moduli\" in the config file, or opt into --placeholder-moduli"
                );
            }
            let out = require(&cfg.paths.out, "output directory (--out)")?;
            let ds = generate_lps_dataset(&cfg.lps)?;
            write_dataset(&ds, &out)?;
            cfg.echo(&out)?;
            summary(&ds, &out);
        }
    }
    Ok(())
}
