use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ino::datagen::{DarcyConfig, LpsConfig};
use ino::evaluation::SweepSpec;
use ino::geometry::{ChannelKind, ChannelLayout};
use ino::operators::{Architecture, OperatorConfig};
use ino::training::TrainConfig;

/// Architecture choices not fixed by the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub architecture: Architecture,
    pub layers: usize,
    pub hidden: usize,
    /// Hidden widths of the kernel network; `None` keeps the scale default.
    pub kernel_hidden: Option<Vec<usize>>,
    pub radius: Option<f64>,
    pub paper_scale: bool,
    /// Fit input/output normalization on the training split.
    pub normalize: bool,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            architecture: Architecture::InoScalar,
            layers: 4,
            hidden: 16,
            kernel_hidden: None,
            radius: None,
            paper_scale: false,
            normalize: true,
        }
    }
}

impl OperatorSection {
    /// Operator for data with the given layouts. The position variant reads
    /// displacement data as positions.
    pub fn build(&self, f_layout: &ChannelLayout, u_layout: &ChannelLayout) -> OperatorConfig {
        let u = if self.architecture == Architecture::InoVectorPosition && u_layout.kinds() == [ChannelKind::Vector2] {
            ChannelLayout::new(vec![ChannelKind::Point2])
        } else {
            u_layout.clone()
        };
        let mut c = OperatorConfig::new(self.architecture, f_layout.clone(), u);
        if self.paper_scale {
            c = c.paper_scale();
        } else {
            c.set_hidden(self.hidden);
        }
        c.set_layers(self.layers);
        if let Some(k) = &self.kernel_hidden {
            c.kernel_hidden = k.clone();
        }
        c.radius = self.radius;
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Everything one pipeline run depends on. Loaded from a JSON file, then
/// overridden by flags; the resolved value is written next to outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; replaces the seed of every section when set.
    pub seed: Option<u64>,
    pub darcy: DarcyConfig,
    pub lps: LpsConfig,
    pub operator: OperatorSection,
    pub train: TrainConfig,
    pub sweep: Option<SweepSpec>,
    pub paths: Paths,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = match path {
            None => Self::default(),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
        };
        if let Some(s) = cfg.seed {
            cfg.set_seed(s);
        }
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.darcy.seed = seed;
        self.lps.seed = seed;
        self.train.seed = seed;
        if let Some(s) = &mut self.sweep {
            s.seed = seed;
        }
    }

    /// Writes `config.json` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join("config.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("cannot write {}", path.display()))
    }
}

pub fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match path {
        Some(p) => Ok(p.clone()),
        None => bail!("missing {what} (pass a flag or set it under \"paths\" in the config file)"),
    }
}

/// Comma-separated list for flag values.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults_and_master_seed_propagates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"seed": 9, "darcy": {"n_train": 5}, "operator": {"architecture": "gno", "layers": 2}}"#).unwrap();
        let c = ExperimentConfig::load(Some(&p)).unwrap();
        assert_eq!(c.darcy.n_train, 5);
        assert_eq!(c.darcy.n_test, DarcyConfig::default().n_test);
        assert_eq!((c.darcy.seed, c.train.seed), (9, 9));
        assert_eq!(c.operator.architecture, Architecture::Gno);
        assert!(c.operator.normalize);
    }

    #[test]
    fn unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"operatr": {}}"#).unwrap();
        assert!(ExperimentConfig::load(Some(&p)).is_err());
    }

    #[test]
    fn position_variant_reads_displacements_as_positions() {
        let s = OperatorSection {
            architecture: Architecture::InoVectorPosition,
            ..Default::default()
        };
        let c = s.build(&"vector2,scalar".parse().unwrap(), &"vector2".parse().unwrap());
        assert_eq!(c.u_layout.to_string(), "point2");
        let paper = OperatorSection { paper_scale: true, ..Default::default() }.build(&ChannelLayout::scalar(1), &ChannelLayout::scalar(1));
        assert_eq!(paper.hidden, 64);
        assert_eq!(paper.kernel_hidden, vec![512, 1024]);
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("16, 31").unwrap(), vec![16, 31]);
        assert!(parse_list::<f64>("0,x").is_err());
    }
}
