use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::diffcore::Tensor;

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Structured-grid descriptor: `rows × cols` nodes spanning `rect`
/// (boundary nodes included). Node `(r, c)` has index `r·cols + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub rect: Rect,
}

impl GridSpec {
    pub fn spacing(&self) -> (f64, f64) {
        (
            (self.rect.x1 - self.rect.x0) / (self.cols - 1) as f64,
            (self.rect.y1 - self.rect.y0) / (self.rows - 1) as f64,
        )
    }
}

/// Region tags for disk clouds: `Ω`, the first nonlocal layer `BΩ`, and the
/// part of the two-layer boundary `BBΩ` outside `BΩ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    InnerLayer,
    OuterLayer,
}

impl Region {
    pub fn code(self) -> u8 {
        match self {
            Region::Interior => 1,
            Region::InnerLayer => 2,
            Region::OuterLayer => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Region::Interior),
            2 => Some(Region::InnerLayer),
            3 => Some(Region::OuterLayer),
            _ => None,
        }
    }

    /// Nodes of the two-layer boundary region (`BBΩ`).
    pub fn is_boundary(self) -> bool {
        self != Region::Interior
    }
}

/// A discretization of the domain: node positions, quadrature weights and
/// the reference edge used to measure edge orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<Point>,
    weights: Vec<f64>,
    ref_edge: (usize, usize),
    grid: Option<GridSpec>,
    regions: Option<Vec<Region>>,
}

impl PointCloud {
    pub fn new(coords: Vec<Point>, weights: Vec<f64>, ref_edge: (usize, usize)) -> Result<Self, GeometryError> {
        if coords.len() != weights.len() {
            return Err(GeometryError::Invalid(format!(
                "{} coordinates but {} weights",
                coords.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(GeometryError::Invalid(format!(
                "quadrature weight {} at node {} is not positive",
                weights[i], i
            )));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::Invalid("non-finite coordinate".into()));
        }
        let cloud = Self {
            coords,
            weights,
            ref_edge: (0, 0),
            grid: None,
            regions: None,
        };
        cloud.with_ref_edge(ref_edge)
    }

    /// Replaces the reference edge; the two nodes must be distinct and not
    /// coincide in space.
    pub fn with_ref_edge(mut self, ref_edge: (usize, usize)) -> Result<Self, GeometryError> {
        let (a, b) = ref_edge;
        let m = self.coords.len();
        if a >= m || b >= m {
            return Err(GeometryError::Index { index: a.max(b), len: m });
        }
        if a == b {
            return Err(GeometryError::Invalid(format!("reference edge ({a}, {b}) uses one node twice")));
        }
        let v = sub(self.coords[b], self.coords[a]);
        if norm(v) == 0.0 {
            return Err(GeometryError::Invalid(format!("reference edge ({a}, {b}) has zero length")));
        }
        self.ref_edge = ref_edge;
        Ok(self)
    }

    pub(crate) fn with_grid(mut self, grid: GridSpec) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn with_regions(mut self, regions: Vec<Region>) -> Result<Self, GeometryError> {
        if regions.len() != self.coords.len() {
            return Err(GeometryError::Invalid(format!(
                "{} region tags for {} nodes",
                regions.len(),
                self.coords.len()
            )));
        }
        self.regions = Some(regions);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ref_edge(&self) -> (usize, usize) {
        self.ref_edge
    }

    /// `x_{r2} − x_{r1}`.
    pub fn ref_vector(&self) -> Point {
        sub(self.coords[self.ref_edge.1], self.coords[self.ref_edge.0])
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn regions(&self) -> Option<&[Region]> {
        self.regions.as_deref()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Coordinates as an `M×2` tensor.
    pub fn coords_tensor(&self) -> Tensor {
        Tensor::raw(vec![self.len(), 2], self.coords.iter().flatten().copied().collect())
    }

    /// Same cloud with node positions replaced (weights, reference edge and
    /// tags kept). The grid descriptor is dropped since positions moved.
    pub(crate) fn with_coords(&self, coords: Vec<Point>) -> Self {
        Self {
            coords,
            weights: self.weights.clone(),
            ref_edge: self.ref_edge,
            grid: None,
            regions: self.regions.clone(),
        }
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Uniform `rows × cols` grid over `rect` with boundary nodes included and
/// Riemann-sum weights `|Ω|/M`. The reference edge is `(0, 1)`, i.e. the
/// first horizontal grid edge.
pub fn make_grid(rows: usize, cols: usize, rect: Rect) -> Result<PointCloud, GeometryError> {
    if rows < 2 || cols < 2 {
        return Err(GeometryError::Invalid(format!("grid {rows}×{cols} needs at least 2×2 nodes")));
    }
    if !(rect.x1 > rect.x0 && rect.y1 > rect.y0) {
        return Err(GeometryError::Invalid(format!("degenerate rectangle {:?}", rect)));
    }
    let grid = GridSpec { rows, cols, rect };
    let (dx, dy) = grid.spacing();
    let m = rows * cols;
    let mut coords = Vec::with_capacity(m);
    for r in 0..rows {
        let y = if r + 1 == rows { rect.y1 } else { rect.y0 + r as f64 * dy };
        for c in 0..cols {
            let x = if c + 1 == cols { rect.x1 } else { rect.x0 + c as f64 * dx };
            coords.push([x, y]);
        }
    }
    let w = rect.area() / m as f64;
    Ok(PointCloud::new(coords, vec![w; m], (0, 1))?.with_grid(grid))
}

/// A disk `|x| ≤ outer` split into `Ω = {|x| ≤ radius}`,
/// `BΩ = {radius < |x| ≤ inner_layer}` and the rest of `BBΩ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskSpec {
    pub radius: f64,
    pub inner_layer: f64,
    pub outer: f64,
    pub spacing: f64,
}

impl DiskSpec {
    /// Plain disk of radius `radius` without boundary layers.
    pub fn plain(radius: f64, spacing: f64) -> Self {
        Self {
            radius,
            inner_layer: radius,
            outer: radius,
            spacing,
        }
    }

    /// `Ω` of radius 0.4 with nonlocal layers out to 0.7 and 1.0.
    pub fn glass_ceramic(spacing: f64) -> Self {
        Self {
            radius: 0.4,
            inner_layer: 0.7,
            outer: 1.0,
            spacing,
        }
    }

    pub fn region_of(&self, p: Point) -> Region {
        const TOL: f64 = 1e-12;
        let r = norm(p);
        if r <= self.radius + TOL {
            Region::Interior
        } else if r <= self.inner_layer + TOL {
            Region::InnerLayer
        } else {
            Region::OuterLayer
        }
    }
}

/// Square-lattice nodes with spacing `spec.spacing` covering `|x| ≤ outer`,
/// tagged by region. Weights are equal and sum to `π·outer²`.
pub fn make_disk(spec: &DiskSpec) -> Result<PointCloud, GeometryError> {
    let DiskSpec {
        radius,
        inner_layer,
        outer,
        spacing,
    } = *spec;
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(GeometryError::Invalid(format!("spacing {spacing} must be positive")));
    }
    if !(radius > 0.0 && inner_layer >= radius && outer >= inner_layer) {
        return Err(GeometryError::Invalid(format!(
            "disk radii must satisfy 0 < {radius} ≤ {inner_layer} ≤ {outer}"
        )));
    }
    if spacing > radius {
        return Err(GeometryError::Invalid(format!(
            "spacing {spacing} is larger than the radius {radius}"
        )));
    }
    let n = (outer / spacing).floor() as i64 + 1;
    let mut coords = Vec::new();
    let mut regions = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            let p = [i as f64 * spacing, j as f64 * spacing];
            if norm(p) <= outer + 1e-12 {
                coords.push(p);
                regions.push(spec.region_of(p));
            }
        }
    }
    let m = coords.len();
    let w = std::f64::consts::PI * outer * outer / m as f64;
    PointCloud::new(coords, vec![w; m], (0, 1))?.with_regions(regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_16_has_uniform_weights() {
        let g = make_grid(16, 16, Rect::UNIT).unwrap();
        assert_eq!(g.len(), 256);
        assert!(g.weights().iter().all(|&w| w == 1.0 / 256.0));
        assert_eq!(g.ref_edge(), (0, 1));
        assert_eq!(g.coords()[255], [1.0, 1.0]);
    }

    #[test]
    fn grid_2x2_is_the_corners() {
        let g = make_grid(2, 2, Rect::UNIT).unwrap();
        assert_eq!(g.coords(), &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn grid_weights_sum_to_one() {
        for (r, c) in [(2, 2), (3, 7), (16, 16), (31, 31), (17, 5)] {
            let g = make_grid(r, c, Rect::UNIT).unwrap();
            assert!((g.total_weight() - 1.0).abs() <= 1e-12, "{r}x{c}");
        }
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(make_grid(1, 5, Rect::UNIT).is_err());
        let flat = Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 0.0 };
        assert!(make_grid(4, 4, flat).is_err());
    }

    #[test]
    fn disk_regions_follow_radii() {
        let spec = DiskSpec::glass_ceramic(0.05);
        let d = make_disk(&spec).unwrap();
        let tags = d.regions().unwrap();
        for (p, t) in d.coords().iter().zip(tags) {
            let r = norm(*p);
            let want = if r <= 0.4 + 1e-12 {
                Region::Interior
            } else if r <= 0.7 + 1e-12 {
                Region::InnerLayer
            } else {
                Region::OuterLayer
            };
            assert_eq!(*t, want);
            assert!(r <= 1.0 + 1e-12);
        }
        let origin = d.coords().iter().position(|p| *p == [0.0, 0.0]).unwrap();
        assert_eq!(tags[origin], Region::Interior);
        let pi = std::f64::consts::PI;
        assert!((d.total_weight() - pi).abs() / pi < 0.02);
    }

    #[test]
    fn disk_lattice_area_is_close_to_analytic_before_scaling() {
        // Count of lattice nodes times spacing² approximates the disk area.
        let d = make_disk(&DiskSpec::glass_ceramic(0.05)).unwrap();
        let raw = d.len() as f64 * 0.05 * 0.05;
        let pi = std::f64::consts::PI;
        assert!((raw - pi).abs() / pi < 0.02, "{raw}");
    }

    #[test]
    fn disk_spacing_larger_than_radius_rejected() {
        assert!(make_disk(&DiskSpec::plain(0.4, 0.5)).is_err());
        assert!(make_disk(&DiskSpec::plain(0.4, 0.0)).is_err());
    }

    #[test]
    fn bad_clouds_rejected() {
        assert!(PointCloud::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![1.0, 0.0], (0, 1)).is_err());
        assert!(PointCloud::new(vec![[0.0, 0.0], [0.0, 0.0]], vec![1.0, 1.0], (0, 1)).is_err());
        assert!(PointCloud::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![1.0, 1.0], (1, 1)).is_err());
        assert!(PointCloud::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![1.0, 1.0], (0, 2)).is_err());
    }
}
