use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::diffcore::io::{read_tensor, write_tensor};
use crate::diffcore::Tensor;
use crate::geometry::{ChannelLayout, FunctionSample, GridSpec, PointCloud, Region};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest";
const CLOUD: &str = "cloud.bin";

/// Contiguous train / validation / test ranges, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Splits {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.train
    }

    pub fn validation_range(&self) -> Range<usize> {
        self.train..self.train + self.validation
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train + self.validation..self.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudDescriptor {
    pub num_nodes: usize,
    pub ref_edge: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub has_regions: bool,
}

impl CloudDescriptor {
    pub fn of(cloud: &PointCloud) -> Self {
        let (a, b) = cloud.ref_edge();
        Self {
            num_nodes: cloud.len(),
            ref_edge: [a, b],
            grid: cloud.grid().copied(),
            has_regions: cloud.regions().is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub problem: String,
    pub seed: u64,
    pub f_layout: ChannelLayout,
    pub u_layout: ChannelLayout,
    pub num_samples: usize,
    #[serde(default)]
    pub per_sample_clouds: bool,
    pub splits: Splits,
    pub cloud: CloudDescriptor,
    /// Echo of the generator configuration.
    #[serde(default)]
    pub generator: toml::Table,
}

/// Samples `(f_i, u_i)` on a shared cloud, optionally with per-sample clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub cloud: PointCloud,
    pub samples: Vec<FunctionSample>,
    pub sample_clouds: Option<Vec<PointCloud>>,
}

impl Dataset {
    pub fn new(
        problem: &str,
        seed: u64,
        f_layout: ChannelLayout,
        u_layout: ChannelLayout,
        splits: Splits,
        cloud: PointCloud,
        samples: Vec<FunctionSample>,
        generator: toml::Table,
    ) -> Result<Self, DatagenError> {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            problem: problem.to_string(),
            seed,
            f_layout,
            u_layout,
            num_samples: samples.len(),
            per_sample_clouds: false,
            splits,
            cloud: CloudDescriptor::of(&cloud),
            generator,
        };
        let ds = Self {
            manifest,
            cloud,
            samples,
            sample_clouds: None,
        };
        ds.check(Path::new("<memory>"))?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn cloud_for(&self, i: usize) -> &PointCloud {
        match &self.sample_clouds {
            Some(c) => &c[i],
            None => &self.cloud,
        }
    }

    pub fn train(&self) -> &[FunctionSample] {
        &self.samples[self.manifest.splits.train_range()]
    }

    pub fn validation(&self) -> &[FunctionSample] {
        &self.samples[self.manifest.splits.validation_range()]
    }

    pub fn test(&self) -> &[FunctionSample] {
        &self.samples[self.manifest.splits.test_range()]
    }

    /// Keeps the first `n` training samples; validation and test are
    /// unchanged.
    pub fn with_train_count(&self, n: usize) -> Result<Dataset, DatagenError> {
        let splits = self.manifest.splits;
        if n > splits.train {
            return Err(DatagenError::Config(format!("asked for {n} training samples, dataset has {}", splits.train)));
        }
        let keep: Vec<usize> = (0..n).chain(splits.train..splits.total()).collect();
        let mut out = self.clone();
        out.samples = keep.iter().map(|&i| self.samples[i].clone()).collect();
        out.sample_clouds = self.sample_clouds.as_ref().map(|c| keep.iter().map(|&i| c[i].clone()).collect());
        out.manifest.splits.train = n;
        out.manifest.num_samples = out.samples.len();
        out.check(Path::new("<memory>"))?;
        Ok(out)
    }

    fn check(&self, path: &Path) -> Result<(), DatagenError> {
        let fail = |detail: String| {
            Err(DatagenError::Format {
                path: path.to_path_buf(),
                detail,
            })
        };
        let m = &self.manifest;
        if m.format_version != FORMAT_VERSION {
            return fail(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                m.format_version
            ));
        }
        if m.num_samples != self.samples.len() {
            return fail(format!("num_samples is {} but {} samples are present", m.num_samples, self.samples.len()));
        }
        if m.splits.total() != m.num_samples {
            return fail(format!(
                "splits sum to {} but num_samples is {}",
                m.splits.total(),
                m.num_samples
            ));
        }
        if m.cloud.num_nodes != self.cloud.len() {
            return fail(format!(
                "cloud.num_nodes is {} but the cloud has {} nodes",
                m.cloud.num_nodes,
                self.cloud.len()
            ));
        }
        if let Some(clouds) = &self.sample_clouds {
            if clouds.len() != self.samples.len() {
                return fail(format!("{} per-sample clouds for {} samples", clouds.len(), self.samples.len()));
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            let nodes = self.cloud_for(i).len();
            for (name, t, layout) in [("f", &s.f, &m.f_layout), ("u", &s.u, &m.u_layout)] {
                if t.shape() != [nodes, layout.width()] {
                    return fail(format!(
                        "sample {i}: {name} has shape {:?}, expected [{nodes}, {}] from {name}_layout `{layout}`",
                        t.shape(),
                        layout.width()
                    ));
                }
            }
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatagenError + '_ {
    move |source| DatagenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sample_path(dir: &Path, i: usize, what: &str) -> PathBuf {
    dir.join(format!("sample_{i}_{what}.bin"))
}

/// Columns `x, y, weight, region code` (code 0 when untagged).
fn cloud_tensor(cloud: &PointCloud) -> Tensor {
    let mut data = Vec::with_capacity(4 * cloud.len());
    for (i, (p, w)) in cloud.coords().iter().zip(cloud.weights()).enumerate() {
        let code = cloud.regions().map_or(0, |r| r[i].code());
        data.extend([p[0], p[1], *w, code as f64]);
    }
    Tensor::new(vec![cloud.len(), 4], data).expect("finite cloud")
}

fn cloud_from_tensor(t: &Tensor, desc: &CloudDescriptor, path: &Path) -> Result<PointCloud, DatagenError> {
    let fail = |detail: String| DatagenError::Format {
        path: path.to_path_buf(),
        detail,
    };
    if t.shape() != [desc.num_nodes, 4] {
        return Err(fail(format!("cloud array has shape {:?}, expected [{}, 4]", t.shape(), desc.num_nodes)));
    }
    let coords = (0..t.rows()).map(|i| [t.get2(i, 0), t.get2(i, 1)]).collect();
    let weights = (0..t.rows()).map(|i| t.get2(i, 2)).collect();
    let mut cloud = PointCloud::new(coords, weights, (desc.ref_edge[0], desc.ref_edge[1]))?;
    if desc.has_regions {
        let regions = (0..t.rows())
            .map(|i| {
                let c = t.get2(i, 3);
                Region::from_code(c as u8)
                    .filter(|_| c.fract() == 0.0)
                    .ok_or_else(|| fail(format!("node {i} has invalid region code {c}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        cloud = cloud.with_regions(regions)?;
    }
    if let Some(g) = desc.grid {
        if g.rows * g.cols != desc.num_nodes {
            return Err(fail(format!("cloud.grid is {}×{} for {} nodes", g.rows, g.cols, desc.num_nodes)));
        }
        cloud = cloud.with_grid(g);
    }
    Ok(cloud)
}

/// Writes `ds` into `dir` (created if needed).
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatagenError> {
    ds.check(dir)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let text = toml::to_string(&ds.manifest).map_err(|e| DatagenError::Format {
        path: dir.join(MANIFEST),
        detail: e.to_string(),
    })?;
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, text).map_err(io_err(&mpath))?;
    write_tensor(&dir.join(CLOUD), &cloud_tensor(&ds.cloud))?;
    for (i, s) in ds.samples.iter().enumerate() {
        write_tensor(&sample_path(dir, i, "f"), &s.f)?;
        write_tensor(&sample_path(dir, i, "u"), &s.u)?;
        if let Some(clouds) = &ds.sample_clouds {
            write_tensor(&sample_path(dir, i, "cloud"), &cloud_tensor(&clouds[i]))?;
        }
    }
    Ok(())
}

/// The parser message plus the offending manifest line, so the field is named.
pub(crate) fn describe_toml_error(e: &toml::de::Error, text: &str) -> String {
    match e.span() {
        Some(span) if span.start < text.len() => {
            let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
            let line_end = text[span.start..].find('\n').map_or(text.len(), |i| span.start + i);
            format!("{} (at `{}`)", e.message(), text[line_start..line_end].trim())
        }
        _ => e.message().to_string(),
    }
}

pub(crate) fn read_manifest_text(dir: &Path) -> Result<(PathBuf, String), DatagenError> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    Ok((mpath, text))
}

/// Reads a dataset directory, or the first member of a collection.
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatagenError> {
    let (mpath, text) = read_manifest_text(dir)?;
    let value: toml::Table = text.parse().map_err(|e: toml::de::Error| DatagenError::Format {
        path: mpath.clone(),
        detail: e.to_string(),
    })?;
    if value.contains_key("members") {
        let c = super::generate::read_collection_manifest(dir)?;
        let first = c.members.first().ok_or_else(|| DatagenError::Format {
            path: mpath.clone(),
            detail: "collection has no members".into(),
        })?;
        return read_dataset(&dir.join(&first.dir));
    }
    let manifest: Manifest = toml::from_str(&text).map_err(|e| DatagenError::Format {
        path: mpath.clone(),
        detail: describe_toml_error(&e, &text),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatagenError::Format {
            path: mpath,
            detail: format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            ),
        });
    }
    let cloud_path = dir.join(CLOUD);
    let cloud = cloud_from_tensor(&read_tensor(&cloud_path)?, &manifest.cloud, &cloud_path)?;
    let mut samples = Vec::with_capacity(manifest.num_samples);
    let mut sample_clouds = manifest.per_sample_clouds.then(Vec::new);
    for i in 0..manifest.num_samples {
        samples.push(FunctionSample {
            f: read_tensor(&sample_path(dir, i, "f"))?,
            u: read_tensor(&sample_path(dir, i, "u"))?,
        });
        if let Some(clouds) = sample_clouds.as_mut() {
            let p = sample_path(dir, i, "cloud");
            let t = read_tensor(&p)?;
            let desc = CloudDescriptor {
                num_nodes: t.shape().first().copied().unwrap_or(0),
                grid: None,
                ..manifest.cloud.clone()
            };
            clouds.push(cloud_from_tensor(&t, &desc, &p)?);
        }
    }
    let ds = Dataset {
        manifest,
        cloud,
        samples,
        sample_clouds,
    };
    ds.check(&mpath)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_disk, make_grid, DiskSpec, Rect};

    fn grid_dataset(n: usize) -> Dataset {
        let cloud = make_grid(4, 5, Rect::UNIT).unwrap();
        let samples = (0..n)
            .map(|i| FunctionSample {
                f: Tensor::new(vec![20, 1], (0..20).map(|k| (k * i) as f64 * 0.1 + 1e-17).collect()).unwrap(),
                u: Tensor::new(vec![20, 1], (0..20).map(|k| (k + i) as f64 / 3.0).collect()).unwrap(),
            })
            .collect();
        let splits = Splits {
            train: n / 2,
            validation: n - n / 2,
            test: 0,
        };
        let mut gen = toml::Table::new();
        gen.insert("note".into(), "fixture".into());
        Dataset::new("darcy", 7, ChannelLayout::scalar(1), ChannelLayout::scalar(1), splits, cloud, samples, gen).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = grid_dataset(3);
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert!(dir.path().join("sample_2_u.bin").exists());
        assert!(dir.path().join("cloud.bin").exists());
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = grid_dataset(0);
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, ds);
    }

    #[test]
    fn disk_regions_and_vector_layouts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = make_disk(&DiskSpec::glass_ceramic(0.25)).unwrap();
        let m = cloud.len();
        let sample = FunctionSample {
            f: Tensor::new(vec![m, 3], (0..3 * m).map(|k| k as f64).collect()).unwrap(),
            u: Tensor::new(vec![m, 2], (0..2 * m).map(|k| -(k as f64)).collect()).unwrap(),
        };
        let ds = Dataset::new(
            "lps",
            1,
            "vector2,scalar".parse().unwrap(),
            "vector2".parse().unwrap(),
            Splits { train: 1, validation: 0, test: 0 },
            cloud,
            vec![sample],
            toml::Table::new(),
        )
        .unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn per_sample_clouds_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = grid_dataset(2);
        let moved: Vec<PointCloud> = (0..2)
            .map(|i| {
                let c = ds.cloud.coords().iter().map(|p| [p[0] + i as f64, p[1]]).collect();
                PointCloud::new(c, ds.cloud.weights().to_vec(), ds.cloud.ref_edge()).unwrap()
            })
            .collect();
        ds.sample_clouds = Some(moved);
        ds.manifest.per_sample_clouds = true;
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.sample_clouds, ds.sample_clouds);
    }

    #[test]
    fn corrupted_manifest_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&grid_dataset(2), dir.path()).unwrap();
        let mpath = dir.path().join("manifest");
        let text = fs::read_to_string(&mpath).unwrap();

        fs::write(&mpath, text.replace("num_samples = 2", "num_samples = \"two\"")).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("num_samples"), "{err}");

        fs::write(&mpath, text.replace("format_version = 1", "format_version = 9")).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("format_version"), "{err}");

        let no_splits: String = text
            .lines()
            .filter(|l| !l.starts_with("[splits]") && !l.starts_with("train") && !l.starts_with("validation") && !l.starts_with("test"))
            .collect::<Vec<_>>()
            .join("\n");
        fs::write(&mpath, no_splits).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("splits"), "{err}");
    }

    #[test]
    fn truncated_array_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&grid_dataset(2), dir.path()).unwrap();
        let p = dir.path().join("sample_1_f.bin");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("sample_1_f.bin"), "{err}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ds = grid_dataset(2);
        ds.samples[1].u = Tensor::zeros(&[20, 2]);
        let dir = tempfile::tempdir().unwrap();
        let err = write_dataset(&ds, dir.path()).unwrap_err().to_string();
        assert!(err.contains("sample 1"), "{err}");
    }

    #[test]
    fn split_ranges_are_disjoint_and_cover() {
        let s = Splits { train: 3, validation: 2, test: 4 };
        assert_eq!(s.train_range(), 0..3);
        assert_eq!(s.validation_range(), 3..5);
        assert_eq!(s.test_range(), 5..9);
    }

    #[test]
    fn fewer_training_samples() {
        let ds = grid_dataset(6);
        let small = ds.with_train_count(1).unwrap();
        assert_eq!(small.manifest.splits, Splits { train: 1, validation: 3, test: 0 });
        assert_eq!(small.samples[0], ds.samples[0]);
        assert_eq!(small.validation(), ds.validation());
        assert!(ds.with_train_count(4).is_err());
    }
}
