use super::cloud::{norm, sub, Point, PointCloud};
use super::GeometryError;

/// Signed angle from `reference` to `v` in `(−π, π]`, counter-clockwise
/// positive. A zero `v` has angle 0.
pub fn signed_angle(v: Point, reference: Point) -> Result<f64, GeometryError> {
    if reference[0] == 0.0 && reference[1] == 0.0 {
        return Err(GeometryError::Invalid("zero reference vector".into()));
    }
    if v[0] == 0.0 && v[1] == 0.0 {
        return Ok(0.0);
    }
    let cross = reference[0] * v[1] - reference[1] * v[0];
    let dot = reference[0] * v[0] + reference[1] * v[1];
    let theta = cross.atan2(dot);
    Ok(if theta <= -std::f64::consts::PI { std::f64::consts::PI } else { theta })
}

/// The edge `x_j − x_i` expressed against the cloud's reference edge:
/// `[|x_j − x_i|·cos θ, |x_j − x_i|·sin θ]`.
pub fn invariant_edge_features(cloud: &PointCloud, i: usize, j: usize) -> Result<[f64; 2], GeometryError> {
    let m = cloud.len();
    if i >= m || j >= m {
        return Err(GeometryError::Index { index: i.max(j), len: m });
    }
    if i == j {
        return Ok([0.0, 0.0]);
    }
    let c = cloud.coords();
    Ok(edge_features(sub(c[j], c[i]), cloud.ref_vector()))
}

/// Like [`invariant_edge_features`] for an explicit edge vector and a
/// non-zero reference vector.
pub(crate) fn edge_features(edge: Point, reference: Point) -> [f64; 2] {
    let len = norm(edge);
    if len == 0.0 {
        return [0.0, 0.0];
    }
    let theta = signed_angle(edge, reference).expect("reference vector checked non-zero");
    let (s, c) = theta.sin_cos();
    [len * c, len * s]
}
