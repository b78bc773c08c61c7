use serde::{Deserialize, Serialize};

use super::OperatorError;
use crate::diffcore::Tensor;
use crate::geometry::{ChannelKind, ChannelLayout};

/// Affine map `v ↦ (v − shift)/scale` for one channel group. Vector and
/// position groups only scale, so rotations commute with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub shift: f64,
    pub scale: f64,
}

impl ChannelNorm {
    pub const IDENTITY: ChannelNorm = ChannelNorm { shift: 0.0, scale: 1.0 };
}

/// Per-group input and output normalization, stored with the architecture
/// so that a checkpoint reproduces the same map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub f: Vec<ChannelNorm>,
    pub u: Vec<ChannelNorm>,
}

fn group_offsets(layout: &ChannelLayout) -> Vec<(ChannelKind, usize)> {
    let mut off = 0;
    layout
        .kinds()
        .iter()
        .map(|&k| {
            let o = off;
            off += k.width();
            (k, o)
        })
        .collect()
}

fn fit_groups<'a>(layout: &ChannelLayout, fields: impl Iterator<Item = &'a Tensor> + Clone) -> Vec<ChannelNorm> {
    group_offsets(layout)
        .into_iter()
        .map(|(kind, off)| {
            let mut n = 0usize;
            let (mut s1, mut s2) = (0.0, 0.0);
            for t in fields.clone() {
                for i in 0..t.rows() {
                    let row = t.row(i);
                    match kind {
                        ChannelKind::Scalar => {
                            s1 += row[off];
                            s2 += row[off] * row[off];
                        }
                        _ => s2 += row[off] * row[off] + row[off + 1] * row[off + 1],
                    }
                    n += 1;
                }
            }
            if n == 0 {
                return ChannelNorm::IDENTITY;
            }
            let mean = s1 / n as f64;
            let var = (s2 / n as f64 - mean * mean).max(0.0);
            let scale = var.sqrt();
            let scale = if scale > 1e-12 * mean.abs() && scale > 0.0 { scale } else { 1.0 };
            ChannelNorm { shift: mean, scale }
        })
        .collect()
}

impl Normalizer {
    /// Mean and standard deviation of scalar groups, root-mean-square norm
    /// of vector groups, pooled over all nodes of the given samples.
    pub fn fit<'a>(
        f_layout: &ChannelLayout,
        u_layout: &ChannelLayout,
        samples: impl Iterator<Item = (&'a Tensor, &'a Tensor)> + Clone,
    ) -> Self {
        Self {
            f: fit_groups(f_layout, samples.clone().map(|s| s.0)),
            u: fit_groups(u_layout, samples.map(|s| s.1)),
        }
    }

    pub fn identity(f_layout: &ChannelLayout, u_layout: &ChannelLayout) -> Self {
        Self {
            f: vec![ChannelNorm::IDENTITY; f_layout.kinds().len()],
            u: vec![ChannelNorm::IDENTITY; u_layout.kinds().len()],
        }
    }

    pub fn validate(&self, f_layout: &ChannelLayout, u_layout: &ChannelLayout) -> Result<(), OperatorError> {
        for (name, norms, layout) in [("input", &self.f, f_layout), ("output", &self.u, u_layout)] {
            if norms.len() != layout.kinds().len() {
                return Err(OperatorError::Config(format!(
                    "{name} normalizer has {} groups, layout `{layout}` has {}",
                    norms.len(),
                    layout.kinds().len()
                )));
            }
            for (n, k) in norms.iter().zip(layout.kinds()) {
                if !(n.scale > 0.0 && n.scale.is_finite() && n.shift.is_finite()) {
                    return Err(OperatorError::Config(format!("{name} normalizer has invalid entry {n:?}")));
                }
                if *k != ChannelKind::Scalar && n.shift != 0.0 {
                    return Err(OperatorError::Config(format!("{name} normalizer shifts a {k:?} group")));
                }
            }
        }
        Ok(())
    }

    /// Normalized copy of an input field.
    pub fn normalize_input(&self, layout: &ChannelLayout, f: &Tensor) -> Tensor {
        apply(&self.f, layout, f, |v, n| (v - n.shift) / n.scale)
    }

    /// Inverse of the output normalization applied to a network output.
    pub fn denormalize_output(&self, layout: &ChannelLayout, u: &Tensor) -> Tensor {
        apply(&self.u, layout, u, |v, n| v * n.scale + n.shift)
    }

    /// Per-column `(scale, shift)` of the output map.
    pub fn output_columns(&self, layout: &ChannelLayout) -> (Vec<f64>, Vec<f64>) {
        let mut scale = Vec::with_capacity(layout.width());
        let mut shift = Vec::with_capacity(layout.width());
        for (n, k) in self.u.iter().zip(layout.kinds()) {
            for _ in 0..k.width() {
                scale.push(n.scale);
                shift.push(n.shift);
            }
        }
        (scale, shift)
    }
}

fn apply(norms: &[ChannelNorm], layout: &ChannelLayout, t: &Tensor, op: impl Fn(f64, &ChannelNorm) -> f64) -> Tensor {
    let groups = group_offsets(layout);
    let mut out = t.clone();
    let cols = t.cols();
    for row in out.data_mut().chunks_mut(cols) {
        for ((kind, off), n) in groups.iter().zip(norms) {
            for v in &mut row[*off..off + kind.width()] {
                *v = op(*v, n);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_standardizes_scalars_and_scales_vectors() {
        let layout: ChannelLayout = "scalar,vector2".parse().unwrap();
        let a = Tensor::new(vec![2, 3], vec![1.0, 3.0, 4.0, 3.0, 0.0, 0.0]).unwrap();
        let b = Tensor::new(vec![2, 3], vec![5.0, 0.0, 0.0, 7.0, 0.0, 0.0]).unwrap();
        let n = Normalizer::fit(&layout, &layout, [(&a, &a), (&b, &b)].into_iter());
        assert_eq!(n.f[0].shift, 4.0);
        assert!((n.f[0].scale - 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(n.f[1].shift, 0.0);
        assert!((n.f[1].scale - (25.0f64 / 4.0).sqrt()).abs() < 1e-14);
        n.validate(&layout, &layout).unwrap();
        let fn_ = n.normalize_input(&layout, &a);
        assert!((fn_.get2(0, 0) + 3.0 / 5f64.sqrt()).abs() < 1e-14);
        assert!((fn_.get2(0, 1) - 3.0 / 2.5).abs() < 1e-14);
    }

    #[test]
    fn round_trip_and_constant_channel() {
        let layout = ChannelLayout::scalar(2);
        let t = Tensor::new(vec![3, 2], vec![1.0, 2.0, 4.0, 2.0, -2.0, 2.0]).unwrap();
        let n = Normalizer::fit(&layout, &layout, std::iter::once((&t, &t)));
        assert_eq!(n.f[1], ChannelNorm { shift: 2.0, scale: 1.0 });
        n.validate(&layout, &layout).unwrap();
        let back = Normalizer { f: n.f.clone(), u: n.f.clone() }.denormalize_output(&layout, &n.normalize_input(&layout, &t));
        assert!(back.max_abs_diff(&t).unwrap() < 1e-14);
    }

    #[test]
    fn rejects_bad_entries() {
        let layout = ChannelLayout::scalar(1);
        let mut n = Normalizer::identity(&layout, &layout);
        n.validate(&layout, &layout).unwrap();
        n.u[0].scale = 0.0;
        assert!(n.validate(&layout, &layout).is_err());
        assert!(Normalizer::identity(&layout, &layout).validate(&ChannelLayout::scalar(2), &layout).is_err());
    }
}
