use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{Point, PointCloud};
use super::layout::{ChannelKind, ChannelLayout};
use super::{FunctionSample, GeometryError};
use crate::diffcore::Tensor;

/// A change of reference frame `x ↦ R·x + g` with orthogonal `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    rotation: [[f64; 2]; 2],
    translation: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    Translate,
    Rotate,
}

impl std::str::FromStr for TransformMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "translate" => Ok(Self::Translate),
            "rotate" => Ok(Self::Rotate),
            other => Err(format!("unknown transform mode `{other}` (expected translate|rotate)")),
        }
    }
}

impl FrameTransform {
    /// Accepts any orthogonal `R` (reflections included) within 1e-12.
    pub fn new(rotation: [[f64; 2]; 2], translation: Point) -> Result<Self, GeometryError> {
        let r = rotation;
        let rtr = [
            [r[0][0] * r[0][0] + r[1][0] * r[1][0], r[0][0] * r[0][1] + r[1][0] * r[1][1]],
            [r[0][1] * r[0][0] + r[1][1] * r[1][0], r[0][1] * r[0][1] + r[1][1] * r[1][1]],
        ];
        let dev = (rtr[0][0] - 1.0)
            .abs()
            .max((rtr[1][1] - 1.0).abs())
            .max(rtr[0][1].abs())
            .max(rtr[1][0].abs());
        if !(dev <= 1e-12) || translation.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Invalid(format!(
                "R = {:?} is not orthogonal (|RᵀR − I| = {dev:e})",
                rotation
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0, 0.0],
        }
    }

    /// Counter-clockwise rotation by `theta` about the origin.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            rotation: [[c, -s], [s, c]],
            translation: [0.0, 0.0],
        }
    }

    pub fn translation(g: Point) -> Self {
        Self {
            rotation: [[1.0, 0.0], [0.0, 1.0]],
            translation: g,
        }
    }

    /// Mirror across the x-axis.
    pub fn reflection() -> Self {
        Self {
            rotation: [[1.0, 0.0], [0.0, -1.0]],
            translation: [0.0, 0.0],
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.rotation
    }

    pub fn offset(&self) -> Point {
        self.translation
    }

    pub fn det(&self) -> f64 {
        let r = self.rotation;
        r[0][0] * r[1][1] - r[0][1] * r[1][0]
    }

    pub fn is_proper(&self) -> bool {
        self.det() > 0.0
    }

    pub fn rotate(&self, v: Point) -> Point {
        let r = self.rotation;
        [r[0][0] * v[0] + r[0][1] * v[1], r[1][0] * v[0] + r[1][1] * v[1]]
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let q = self.rotate(p);
        [q[0] + self.translation[0], q[1] + self.translation[1]]
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &FrameTransform) -> FrameTransform {
        let a = self.rotation;
        let b = first.rotation;
        let mut r = [[0.0; 2]; 2];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        FrameTransform {
            rotation: r,
            translation: self.apply_point(first.translation),
        }
    }
}

/// Translation with `g ∼ U[−C, C]²` or counter-clockwise rotation by
/// `θ ∼ U[0, C]`. `C = 0` gives the identity.
pub fn random_transform(range: f64, mode: TransformMode, rng: &mut impl Rng) -> FrameTransform {
    let c = range.max(0.0);
    if c == 0.0 {
        return FrameTransform::identity();
    }
    match mode {
        TransformMode::Translate => FrameTransform::translation([rng.random_range(-c..=c), rng.random_range(-c..=c)]),
        TransformMode::Rotate => FrameTransform::rotation(rng.random_range(0.0..=c)),
    }
}

/// Moves a field's channels into the new frame according to `layout`.
pub fn transform_field(field: &Tensor, layout: &ChannelLayout, t: &FrameTransform) -> Result<Tensor, GeometryError> {
    let width = layout.width();
    if field.ndim() != 2 || field.cols() != width {
        return Err(GeometryError::Layout(format!(
            "field of shape {:?} does not match layout {} (width {})",
            field.shape(),
            layout,
            width
        )));
    }
    let mut out = field.clone();
    for row in out.data_mut().chunks_mut(width) {
        let mut off = 0;
        for kind in layout.kinds() {
            match kind {
                ChannelKind::Scalar => {}
                ChannelKind::Vector2 => {
                    let v = t.rotate([row[off], row[off + 1]]);
                    row[off..off + 2].copy_from_slice(&v);
                }
                ChannelKind::Point2 => {
                    let v = t.apply_point([row[off], row[off + 1]]);
                    row[off..off + 2].copy_from_slice(&v);
                }
            }
            off += kind.width();
        }
    }
    Ok(out)
}

/// Expresses a sample in the frame `x ↦ R·x + g`.
///
/// Coordinates move; vector channels rotate; scalar channels, quadrature
/// weights and reference-edge indices are unchanged, so the reference
/// vector rotates with the frame.
pub fn apply_transform(
    cloud: &PointCloud,
    sample: &FunctionSample,
    t: &FrameTransform,
    f_layout: &ChannelLayout,
    u_layout: &ChannelLayout,
) -> Result<(PointCloud, FunctionSample), GeometryError> {
    for (name, field) in [("f", &sample.f), ("u", &sample.u)] {
        if field.rows() != cloud.len() {
            return Err(GeometryError::Layout(format!(
                "{name} has {} rows for a cloud of {} nodes",
                field.rows(),
                cloud.len()
            )));
        }
    }
    let coords = cloud.coords().iter().map(|&p| t.apply_point(p)).collect();
    let moved = cloud.with_coords(coords);
    let f = transform_field(&sample.f, f_layout, t)?;
    let u = transform_field(&sample.u, u_layout, t)?;
    Ok((moved, FunctionSample { f, u }))
}
