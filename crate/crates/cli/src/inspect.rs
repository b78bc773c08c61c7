use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use ino::datagen::{read_collection, read_dataset};
use ino::evaluation::read_report;
use ino::operators::{read_checkpoint_manifest, CheckpointManifest};

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Dataset, collection or checkpoint directory, or a report file.
    path: PathBuf,
}

fn print_checkpoint(m: &CheckpointManifest) -> Result<()> {
    let c = &m.config;
    let n: usize = m.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    println!("checkpoint: {} | L {} | tau {} | d_h {} | {n} parameters | seed {}", c.architecture, c.layers, c.tau, c.hidden, m.seed);
    println!("layouts: f {} -> u {} | radius {:?} | normalized {}", c.f_layout, c.u_layout, c.radius, c.normalizer.is_some());
    for p in &m.params {
        println!("  {:<24} {:?}", p.name, p.shape);
    }
    Ok(())
}

pub fn run(a: InspectArgs) -> Result<()> {
    let p = &a.path;
    if p.is_file() {
        let r = read_report(p)?;
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    let text = fs::read_to_string(p.join("manifest")).with_context(|| format!("{} has no manifest", p.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("unreadable manifest in {}", p.display()))?;
    if table.contains_key("params") {
        return print_checkpoint(&read_checkpoint_manifest(p)?);
    }
    if table.contains_key("members") {
        for (r, ds) in read_collection(p)? {
            let m = &ds.manifest;
            println!("res {r}: problem {} | {} samples | {} nodes | seed {}", m.problem, m.num_samples, ds.cloud.len(), m.seed);
        }
        return Ok(());
    }
    let ds = read_dataset(p)?;
    let m = &ds.manifest;
    println!(
        "dataset: problem {} | {} samples (train {}, validation {}, test {}) | {} nodes | f {} -> u {} | seed {}",
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
    println!("generator:\n{}", toml::to_string_pretty(&m.generator)?);
    Ok(())
}
