use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::datagen::Dataset;
use crate::geometry::{apply_transform, random_transform, PointCloud, TransformMode};

/// `count` transformed copies per training sample. Each copy is rotated about
/// the origin by `θ ∼ U[0, rotate]`, then translated by `g ∼ U[−translate,
/// translate]²`; a zero range disables that part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub count: usize,
    pub translate: f64,
    pub rotate: f64,
}

impl AugmentSpec {
    /// Three copies under translations with `C = 1`.
    pub fn translations() -> Self {
        Self {
            count: 3,
            translate: 1.0,
            rotate: 0.0,
        }
    }

    /// Three copies under rotations with `C = 2π`.
    pub fn rotations() -> Self {
        Self {
            count: 3,
            translate: 0.0,
            rotate: 2.0 * std::f64::consts::PI,
        }
    }
}

/// Appends the copies after the original training samples; validation and
/// test samples are carried over untouched. The result has per-sample clouds.
pub fn augment(data: &Dataset, spec: &AugmentSpec, seed: u64) -> Result<Dataset, TrainingError> {
    let splits = data.manifest.splits;
    let (f_layout, u_layout) = (&data.manifest.f_layout, &data.manifest.u_layout);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(data.len() + spec.count * splits.train);
    let mut clouds: Vec<PointCloud> = Vec::with_capacity(samples.capacity());
    for i in splits.train_range() {
        samples.push(data.samples[i].clone());
        clouds.push(data.cloud_for(i).clone());
    }
    for _ in 0..spec.count {
        for i in splits.train_range() {
            let rot = random_transform(spec.rotate, TransformMode::Rotate, &mut rng);
            let shift = random_transform(spec.translate, TransformMode::Translate, &mut rng);
            let t = shift.after(&rot);
            let (cloud, sample) = apply_transform(data.cloud_for(i), &data.samples[i], &t, f_layout, u_layout)?;
            samples.push(sample);
            clouds.push(cloud);
        }
    }
    for i in splits.train..data.len() {
        samples.push(data.samples[i].clone());
        clouds.push(data.cloud_for(i).clone());
    }
    let mut out = data.clone();
    out.manifest.splits.train = splits.train * (1 + spec.count);
    out.manifest.num_samples = samples.len();
    out.manifest.per_sample_clouds = true;
    out.samples = samples;
    out.sample_clouds = Some(clouds);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Splits;
    use crate::diffcore::Tensor;
    use crate::geometry::{make_grid, ChannelLayout, FunctionSample, Rect};

    fn data(n_train: usize) -> Dataset {
        let cloud = make_grid(3, 3, Rect::UNIT).unwrap();
        let samples = (0..n_train + 2)
            .map(|s| FunctionSample {
                f: Tensor::new(vec![9, 1], (0..9).map(|k| (k + s) as f64).collect()).unwrap(),
                u: Tensor::new(vec![9, 1], (0..9).map(|k| (k * s) as f64).collect()).unwrap(),
            })
            .collect();
        Dataset::new(
            "darcy",
            0,
            ChannelLayout::scalar(1),
            ChannelLayout::scalar(1),
            Splits { train: n_train, validation: 1, test: 1 },
            cloud,
            samples,
            toml::Table::new(),
        )
        .unwrap()
    }

    #[test]
    fn three_copies_quadruple_the_training_split() {
        let d = data(10);
        let a = augment(&d, &AugmentSpec::translations(), 1).unwrap();
        assert_eq!(a.train().len(), 40);
        assert_eq!(a.validation(), d.validation());
        assert_eq!(a.test(), d.test());
        assert_eq!(a.cloud_for(a.len() - 1), &d.cloud);
        // Copy k of sample i sits at 10 + 10k + i and keeps its scalar data.
        assert_eq!(a.samples[10 + 10 + 3], d.samples[3]);
        assert_ne!(a.cloud_for(23).coords(), d.cloud.coords());
    }

    #[test]
    fn zero_ranges_give_identical_copies() {
        let d = data(4);
        let spec = AugmentSpec {
            count: 2,
            translate: 0.0,
            rotate: 0.0,
        };
        let a = augment(&d, &spec, 5).unwrap();
        for k in 0..2 {
            for i in 0..4 {
                assert_eq!(a.samples[4 + 4 * k + i], d.samples[i]);
                assert_eq!(a.cloud_for(4 + 4 * k + i).coords(), d.cloud.coords());
            }
        }
    }

    #[test]
    fn augmented_dataset_round_trips_on_disk() {
        let d = data(2);
        let a = augment(&d, &AugmentSpec::rotations(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        crate::datagen::write_dataset(&a, dir.path()).unwrap();
        let back = crate::datagen::read_dataset(dir.path()).unwrap();
        assert_eq!(back.samples, a.samples);
        for i in 0..a.len() {
            assert_eq!(back.cloud_for(i).coords(), a.cloud_for(i).coords());
        }
    }
}
