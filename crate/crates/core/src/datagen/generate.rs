use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::darcy::{downsample, sample_conductivity, solve_darcy, DarcyConfig};
use super::dataset::{describe_toml_error, read_dataset, read_manifest_text, write_dataset, Dataset, Splits, FORMAT_VERSION};
use super::grf::GrfField;
use super::lps::{boundary_data, sample_microstructure, solve_lps, LpsConfig, LpsProblem};
use super::DatagenError;
use crate::diffcore::Tensor;
use crate::geometry::{make_grid, ChannelLayout, FunctionSample, Rect};

/// Independent stream per sample so generation order does not matter.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn echo<T: Serialize>(cfg: &T) -> Result<toml::Table, DatagenError> {
    toml::Table::try_from(cfg).map_err(|e| DatagenError::Config(format!("config cannot be recorded: {e}")))
}

/// One dataset per output resolution, all drawn from the same fine-grid
/// solutions. Inputs are the conductivity, outputs the pressure.
pub fn generate_darcy_dataset(cfg: &DarcyConfig) -> Result<Vec<Dataset>, DatagenError> {
    cfg.validate()?;
    let n = cfg.fine_resolution;
    let fine: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.num_samples())
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            let a = sample_conductivity(cfg, &mut rng);
            let u = solve_darcy(&a, n, cfg.tolerance)?.u;
            Ok((a, u))
        })
        .collect::<Result<_, DatagenError>>()?;
    let splits = Splits {
        train: cfg.n_train,
        validation: cfg.n_validation,
        test: cfg.n_test,
    };
    let generator = echo(cfg)?;
    cfg.resolutions
        .iter()
        .map(|&r| {
            let cloud = make_grid(r, r, Rect::UNIT)?;
            let samples = fine
                .iter()
                .map(|(a, u)| {
                    Ok(FunctionSample {
                        f: Tensor::new(vec![r * r, 1], downsample(a, n, r)?)?,
                        u: Tensor::new(vec![r * r, 1], downsample(u, n, r)?)?,
                    })
                })
                .collect::<Result<Vec<_>, DatagenError>>()?;
            let mut gen = generator.clone();
            gen.insert("resolution".into(), toml::Value::Integer(r as i64));
            Dataset::new(
                "darcy",
                cfg.seed,
                ChannelLayout::scalar(1),
                ChannelLayout::scalar(1),
                splits,
                cloud,
                samples,
                gen,
            )
        })
        .collect()
}

/// Boundary-driven displacement on the glass-ceramic disk. Inputs are the
/// boundary displacement (zero on `Ω`) and the crystal indicator; outputs the
/// displacement on every node.
pub fn generate_lps_dataset(cfg: &LpsConfig) -> Result<Dataset, DatagenError> {
    cfg.validate()?;
    let moduli = cfg.moduli()?;
    let problem = LpsProblem::from_config(cfg)?;
    let m = problem.cloud().len();
    let samples = (0..cfg.num_samples())
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i);
            let crystal = sample_microstructure(cfg, problem.cloud(), &mut rng)?;
            let field = GrfField::sample(&cfg.boundary, &mut rng);
            let u_bc = boundary_data(&problem, |p| field.eval(p))?;
            let u = solve_lps(&problem, &moduli, &crystal, &u_bc)?;
            let mut f = Vec::with_capacity(3 * m);
            for (b, c) in u_bc.iter().zip(&crystal) {
                f.extend([b[0], b[1], if *c { 1.0 } else { 0.0 }]);
            }
            Ok(FunctionSample {
                f: Tensor::new(vec![m, 3], f)?,
                u: Tensor::new(vec![m, 2], u.into_iter().flatten().collect())?,
            })
        })
        .collect::<Result<Vec<_>, DatagenError>>()?;
    Dataset::new(
        "lps",
        cfg.seed,
        "vector2,scalar".parse().expect("static layout"),
        "vector2".parse().expect("static layout"),
        Splits {
            train: cfg.n_train,
            validation: cfg.n_validation,
            test: cfg.n_test,
        },
        problem.cloud().clone(),
        samples,
        echo(cfg)?,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionMember {
    pub resolution: usize,
    pub dir: String,
}

/// Several datasets of one problem at different resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionManifest {
    pub format_version: u32,
    pub problem: String,
    pub members: Vec<CollectionMember>,
}

/// Writes per-resolution Darcy datasets as `res<r>/` below `dir`.
pub fn generate_darcy_collection(cfg: &DarcyConfig, dir: &Path) -> Result<Vec<Dataset>, DatagenError> {
    let sets = generate_darcy_dataset(cfg)?;
    let mut members = Vec::new();
    for (ds, &r) in sets.iter().zip(&cfg.resolutions) {
        let sub = format!("res{r}");
        write_dataset(ds, &dir.join(&sub))?;
        members.push(CollectionMember { resolution: r, dir: sub });
    }
    let manifest = CollectionManifest {
        format_version: FORMAT_VERSION,
        problem: "darcy".into(),
        members,
    };
    let path = dir.join("manifest");
    let text = toml::to_string(&manifest).map_err(|e| DatagenError::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|source| DatagenError::Io { path, source })?;
    Ok(sets)
}

pub(crate) fn read_collection_manifest(dir: &Path) -> Result<CollectionManifest, DatagenError> {
    let (path, text) = read_manifest_text(dir)?;
    let c: CollectionManifest = toml::from_str(&text).map_err(|e| DatagenError::Format {
        path: path.clone(),
        detail: describe_toml_error(&e, &text),
    })?;
    if c.format_version != FORMAT_VERSION {
        return Err(DatagenError::Format {
            path,
            detail: format!("format_version {} is not supported", c.format_version),
        });
    }
    Ok(c)
}

/// Every member of a collection with its resolution.
pub fn read_collection(dir: &Path) -> Result<Vec<(usize, Dataset)>, DatagenError> {
    read_collection_manifest(dir)?
        .members
        .iter()
        .map(|m| Ok((m.resolution, read_dataset(&dir.join(&m.dir))?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Moduli;

    fn small_darcy() -> DarcyConfig {
        DarcyConfig {
            fine_resolution: 61,
            resolutions: vec![16, 31],
            n_train: 3,
            n_validation: 1,
            n_test: 1,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn darcy_is_deterministic_and_nonnegative() {
        let a = generate_darcy_dataset(&small_darcy()).unwrap();
        let b = generate_darcy_dataset(&small_darcy()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].cloud.len(), 256);
        assert_eq!(a[1].cloud.len(), 961);
        for ds in &a {
            for s in &ds.samples {
                assert!(s.u.data().iter().all(|&v| v >= 0.0));
                assert!(s.f.data().iter().all(|&v| v == 12.0 || v == 3.0));
            }
        }
        let mut other = small_darcy();
        other.seed = 12;
        assert_ne!(generate_darcy_dataset(&other).unwrap()[0].samples, a[0].samples);
    }

    #[test]
    fn darcy_coarse_grids_share_fine_samples() {
        let sets = generate_darcy_dataset(&small_darcy()).unwrap();
        // Grid node (0,0) and (1,1) corners coincide at every resolution.
        for s in 0..5 {
            let (a, b) = (&sets[0].samples[s], &sets[1].samples[s]);
            assert_eq!(a.f.get2(0, 0), b.f.get2(0, 0));
            assert_eq!(a.f.get2(255, 0), b.f.get2(960, 0));
        }
    }

    #[test]
    fn default_splits_recorded_in_manifest() {
        let cfg = DarcyConfig::default();
        assert_eq!((cfg.n_train, cfg.n_validation, cfg.n_test), (100, 40, 40));
        let dir = tempfile::tempdir().unwrap();
        generate_darcy_collection(&small_darcy(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("res16/manifest")).unwrap();
        assert!(text.contains("train = 3") && text.contains("validation = 1") && text.contains("test = 1"));
        assert!(text.contains("fine_resolution = 61"));
        let coll = read_collection(dir.path()).unwrap();
        assert_eq!(coll.iter().map(|c| c.0).collect::<Vec<_>>(), vec![16, 31]);
        assert_eq!(read_dataset(dir.path()).unwrap(), coll[0].1);
    }

    #[test]
    fn files_are_bit_identical_across_runs() {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut cfg = small_darcy();
        cfg.resolutions = vec![16];
        generate_darcy_collection(&cfg, d1.path()).unwrap();
        generate_darcy_collection(&cfg, d2.path()).unwrap();
        for name in ["manifest", "res16/manifest", "res16/cloud.bin", "res16/sample_4_u.bin"] {
            assert_eq!(fs::read(d1.path().join(name)).unwrap(), fs::read(d2.path().join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn lps_dataset_layout() {
        let cfg = LpsConfig {
            spacing: 0.1,
            moduli: Some(Moduli::placeholder()),
            n_train: 2,
            n_validation: 1,
            n_test: 0,
            seed: 4,
            ..Default::default()
        };
        let ds = generate_lps_dataset(&cfg).unwrap();
        assert_eq!(ds.manifest.f_layout.to_string(), "vector2,scalar");
        let regions = ds.cloud.regions().unwrap();
        for s in &ds.samples {
            for (i, r) in regions.iter().enumerate() {
                let a = s.f.get2(i, 2);
                assert!(a == 0.0 || a == 1.0);
                if r.is_boundary() {
                    assert_eq!([s.f.get2(i, 0), s.f.get2(i, 1)], [s.u.get2(i, 0), s.u.get2(i, 1)]);
                } else {
                    assert_eq!([s.f.get2(i, 0), s.f.get2(i, 1)], [0.0, 0.0]);
                }
            }
        }
        assert_eq!(generate_lps_dataset(&cfg).unwrap(), ds);
        assert!(ds.manifest.generator.contains_key("moduli"));
    }

    #[test]
    fn lps_requires_moduli() {
        let cfg = LpsConfig::default();
        assert!(generate_lps_dataset(&cfg).is_err());
    }
}
