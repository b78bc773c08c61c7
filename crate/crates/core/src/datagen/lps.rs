use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{CosineField, CosineFieldSpec};
use super::grf::GrfConfig;
use super::DatagenError;
use crate::geometry::{make_disk, DiskSpec, Point, PointCloud, Rect, Region};

/// Lamé first parameter and shear modulus of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModuli {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moduli {
    pub glass: PhaseModuli,
    pub crystal: PhaseModuli,
}

impl Moduli {
    /// Illustrative values (glass `λ = μ = 1`, crystal `λ = μ = 2`). These are
    /// not measured material parameters and must be opted into explicitly.
    pub fn placeholder() -> Self {
        Self {
            glass: PhaseModuli { lambda: 1.0, mu: 1.0 },
            crystal: PhaseModuli { lambda: 2.0, mu: 2.0 },
        }
    }

    pub fn homogeneous(lambda: f64, mu: f64) -> Self {
        let p = PhaseModuli { lambda, mu };
        Self { glass: p, crystal: p }
    }

    fn of(&self, crystal: bool) -> PhaseModuli {
        if crystal {
            self.crystal
        } else {
            self.glass
        }
    }
}

/// Quasi-static linear peridynamic solid on the disk `|x| ≤ outer` with
/// Dirichlet data on the two-layer boundary `radius < |x| ≤ outer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpsConfig {
    pub horizon: f64,
    pub radius: f64,
    pub inner_layer: f64,
    pub outer: f64,
    pub spacing: f64,
    /// Required; `None` is rejected so that no material values are implied.
    pub moduli: Option<Moduli>,
    pub crystal_fraction: f64,
    /// Field thresholded into the crystal phase.
    pub microstructure: CosineFieldSpec,
    pub boundary: GrfConfig,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for LpsConfig {
    fn default() -> Self {
        Self {
            horizon: 0.3,
            radius: 0.4,
            inner_layer: 0.7,
            outer: 1.0,
            spacing: 0.05,
            moduli: None,
            crystal_fraction: 0.4,
            microstructure: CosineFieldSpec {
                alpha: 2.0,
                tau: 8.0,
                modes: 24,
            },
            boundary: GrfConfig::default(),
            n_train: 100,
            n_validation: 40,
            n_test: 40,
            seed: 0,
        }
    }
}

impl LpsConfig {
    pub fn num_samples(&self) -> usize {
        self.n_train + self.n_validation + self.n_test
    }

    pub fn moduli(&self) -> Result<Moduli, DatagenError> {
        self.moduli.ok_or_else(|| {
            DatagenError::Config(
                "peridynamic moduli must be given explicitly (the non-measured placeholder values are opt-in)"
                    .into(),
            )
        })
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        if !(0.0 < self.radius && self.radius < self.inner_layer && self.inner_layer < self.outer) {
            return bad(format!(
                "radii must increase strictly, got {} < {} < {}",
                self.radius, self.inner_layer, self.outer
            ));
        }
        if !(self.crystal_fraction > 0.0 && self.crystal_fraction < 1.0) {
            return bad(format!("crystal fraction {} must lie in (0, 1)", self.crystal_fraction));
        }
        if self.outer > self.boundary.period / 2.0 {
            return bad(format!(
                "outer radius {} exceeds the boundary field square half-width {}",
                self.outer,
                self.boundary.period / 2.0
            ));
        }
        let m = self.moduli()?;
        for p in [m.glass, m.crystal] {
            if !(p.mu > 0.0 && p.lambda.is_finite()) {
                return bad(format!("invalid phase moduli {p:?}"));
            }
        }
        Ok(())
    }

    pub fn disk(&self) -> DiskSpec {
        DiskSpec {
            radius: self.radius,
            inner_layer: self.inner_layer,
            outer: self.outer,
            spacing: self.spacing,
        }
    }
}

/// `m(δ) = ∫_{B_δ(0)} K(|y|)|y|² dy = 2πδ³/3` for `K(r) = 1/r`.
pub fn nonlocal_volume(horizon: f64) -> f64 {
    2.0 * std::f64::consts::PI * horizon.powi(3) / 3.0
}

/// Node cloud of the configured disk, tagged by region.
pub fn lps_cloud(cfg: &LpsConfig) -> Result<PointCloud, DatagenError> {
    Ok(make_disk(&cfg.disk())?)
}

/// Crystal indicator per node: a smooth random field thresholded at the
/// quantile that makes `crystal_fraction` of the `Ω` nodes crystal.
pub fn sample_microstructure(cfg: &LpsConfig, cloud: &PointCloud, rng: &mut impl Rng) -> Result<Vec<bool>, DatagenError> {
    let regions = cloud
        .regions()
        .ok_or_else(|| DatagenError::Config("cloud has no region tags".into()))?;
    let rect = Rect {
        x0: -cfg.outer,
        y0: -cfg.outer,
        x1: cfg.outer,
        y1: cfg.outer,
    };
    let field = CosineField::sample(&cfg.microstructure, rect, rng);
    let values: Vec<f64> = cloud.coords().iter().map(|&p| field.eval(p)).collect();
    let mut inside: Vec<f64> = values
        .iter()
        .zip(regions)
        .filter(|(_, r)| **r == Region::Interior)
        .map(|(v, _)| *v)
        .collect();
    if inside.is_empty() {
        return Err(DatagenError::Config("no interior nodes".into()));
    }
    inside.sort_by(|a, b| b.total_cmp(a));
    let k = ((cfg.crystal_fraction * inside.len() as f64).round() as usize).clamp(1, inside.len());
    let threshold = inside[k - 1];
    Ok(values.iter().map(|&v| v >= threshold).collect())
}

/// Neighborhoods and index maps for one cloud.
#[derive(Debug, Clone)]
pub struct LpsProblem {
    horizon: f64,
    cloud: PointCloud,
    regions: Vec<Region>,
    /// Node → unknown index for `Ω` nodes.
    unknown: Vec<Option<usize>>,
    interior: Vec<usize>,
    /// `B_δ(z) \ {z}` for every node where the dilatation is needed.
    neighbors: Vec<Option<Vec<usize>>>,
}

impl LpsProblem {
    pub fn new(horizon: f64, cloud: PointCloud) -> Result<Self, DatagenError> {
        let regions = cloud
            .regions()
            .ok_or_else(|| DatagenError::Config("cloud has no region tags".into()))?
            .to_vec();
        let coords = cloud.coords();
        let mut unknown = vec![None; coords.len()];
        let mut interior = Vec::new();
        for (i, r) in regions.iter().enumerate() {
            if *r == Region::Interior {
                unknown[i] = Some(interior.len());
                interior.push(i);
            }
        }
        let reach = horizon * (1.0 + 1e-12);
        let neighbors = regions
            .iter()
            .enumerate()
            .map(|(z, r)| {
                if *r == Region::OuterLayer {
                    return Ok(None);
                }
                let pz = coords[z];
                let list: Vec<usize> = (0..coords.len())
                    .filter(|&y| y != z && (coords[y][0] - pz[0]).hypot(coords[y][1] - pz[1]) <= reach)
                    .collect();
                if list.is_empty() {
                    return Err(DatagenError::Config(format!(
                        "node {z} at ({}, {}) has no neighbors within the horizon {horizon}",
                        pz[0], pz[1]
                    )));
                }
                Ok(Some(list))
            })
            .collect::<Result<Vec<_>, DatagenError>>()?;
        for &x in &interior {
            for &y in neighbors[x].as_ref().expect("interior node") {
                if neighbors[y].is_none() {
                    return Err(DatagenError::Config(format!(
                        "neighbor {y} of interior node {x} lies beyond the first boundary layer"
                    )));
                }
            }
        }
        Ok(Self {
            horizon,
            cloud,
            regions,
            unknown,
            interior,
            neighbors,
        })
    }

    pub fn from_config(cfg: &LpsConfig) -> Result<Self, DatagenError> {
        Self::new(cfg.horizon, lps_cloud(cfg)?)
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Sparse coefficients of `d(z)` on the flattened displacement
    /// (`2·node + component`), with `z`'s own entries repeated per neighbor.
    fn dilatation_row(&self, z: usize) -> Vec<(usize, f64)> {
        let m = nonlocal_volume(self.horizon);
        let coords = self.cloud.coords();
        let w = self.cloud.weights();
        let nbrs = self.neighbors[z].as_ref().expect("dilatation node");
        let mut row = Vec::with_capacity(2 * nbrs.len() + 2);
        let mut own = [0.0; 2];
        for &y in nbrs {
            let r = [coords[y][0] - coords[z][0], coords[y][1] - coords[z][1]];
            let c = w[y] / (m * r[0].hypot(r[1]));
            for k in 0..2 {
                row.push((2 * y + k, c * r[k]));
                own[k] -= c * r[k];
            }
        }
        row.push((2 * z, own[0]));
        row.push((2 * z + 1, own[1]));
        row
    }

    /// Discrete dilatation on `Ω ∪ BΩ` (`None` on the outer layer).
    pub fn dilatation(&self, u: &[Point]) -> Result<Vec<Option<f64>>, DatagenError> {
        if u.len() != self.cloud.len() {
            return Err(DatagenError::Config(format!(
                "{} displacements for {} nodes",
                u.len(),
                self.cloud.len()
            )));
        }
        Ok((0..u.len())
            .map(|z| {
                self.neighbors[z].as_ref().map(|_| {
                    self.dilatation_row(z)
                        .into_iter()
                        .map(|(col, c)| c * u[col / 2][col % 2])
                        .sum()
                })
            })
            .collect())
    }

    /// Linear system `A·u_Ω = b` for the interior displacements, with the
    /// pair moduli taken as arithmetic means of the endpoint phases.
    pub fn assemble(&self, moduli: &Moduli, crystal: &[bool], u_bc: &[Point]) -> Result<(DMatrix<f64>, DVector<f64>), DatagenError> {
        let n_nodes = self.cloud.len();
        if crystal.len() != n_nodes || u_bc.len() != n_nodes {
            return Err(DatagenError::Config(format!(
                "microstructure ({}) and boundary data ({}) must cover all {n_nodes} nodes",
                crystal.len(),
                u_bc.len()
            )));
        }
        let m = nonlocal_volume(self.horizon);
        let coords = self.cloud.coords();
        let w = self.cloud.weights();
        let d_rows: Vec<Option<Vec<(usize, f64)>>> = (0..n_nodes)
            .map(|z| self.neighbors[z].as_ref().map(|_| self.dilatation_row(z)))
            .collect();
        let n = 2 * self.interior.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        let mut scratch = [vec![0.0; 2 * n_nodes], vec![0.0; 2 * n_nodes]];
        for (row_node, &x) in self.interior.iter().enumerate() {
            let px = moduli.of(crystal[x]);
            let mut own_d = [0.0; 2];
            for &y in self.neighbors[x].as_ref().expect("interior node") {
                let py = moduli.of(crystal[y]);
                let lam = 0.5 * (px.lambda + py.lambda);
                let mu = 0.5 * (px.mu + py.mu);
                let r = [coords[y][0] - coords[x][0], coords[y][1] - coords[x][1]];
                let len = r[0].hypot(r[1]);
                let k = 1.0 / len;
                let cd = -w[y] * (lam - mu) * k / m;
                let cm = -8.0 * w[y] * mu * k / (m * len * len);
                let dy = d_rows[y].as_ref().expect("checked at construction");
                for i in 0..2 {
                    own_d[i] += cd * r[i];
                    for &(col, c) in dy {
                        scratch[i][col] += cd * r[i] * c;
                    }
                    for j in 0..2 {
                        let v = cm * r[i] * r[j];
                        scratch[i][2 * y + j] += v;
                        scratch[i][2 * x + j] -= v;
                    }
                }
            }
            for &(col, c) in d_rows[x].as_ref().expect("interior node") {
                scratch[0][col] += own_d[0] * c;
                scratch[1][col] += own_d[1] * c;
            }
            for (i, s) in scratch.iter_mut().enumerate() {
                let row = 2 * row_node + i;
                for (col, v) in s.iter_mut().enumerate() {
                    if *v == 0.0 {
                        continue;
                    }
                    let node = col / 2;
                    match self.unknown[node] {
                        Some(u) => a[(row, 2 * u + col % 2)] += *v,
                        None => b[row] -= *v * u_bc[node][col % 2],
                    }
                    *v = 0.0;
                }
            }
        }
        Ok((a, b))
    }
}

/// Displacement on every node: the solved interior and `u_bc` elsewhere.
pub fn solve_lps(problem: &LpsProblem, moduli: &Moduli, crystal: &[bool], u_bc: &[Point]) -> Result<Vec<Point>, DatagenError> {
    const TOL: f64 = 1e-10;
    let (a, b) = problem.assemble(moduli, crystal, u_bc)?;
    let lu = a.clone().lu();
    let pivots = lu.u().diagonal().abs();
    if pivots.is_empty() || pivots.min() <= 1e-13 * pivots.max() {
        return Err(DatagenError::Singular(
            "peridynamic system matrix is singular; the boundary layer does not constrain the interior".into(),
        ));
    }
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| DatagenError::Singular("peridynamic system matrix is singular".into()))?;
    let scale = b.norm().max(f64::MIN_POSITIVE);
    let mut residual = (&a * &x - &b).norm() / scale;
    if residual > TOL && residual.is_finite() {
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
            residual = (&a * &x - &b).norm() / scale;
        }
    }
    if !(residual <= TOL) && b.norm() > 0.0 {
        return Err(DatagenError::Singular(format!(
            "relative residual {residual:e} after the direct solve; the system is numerically singular"
        )));
    }
    let mut u = u_bc.to_vec();
    for (k, &node) in problem.interior.iter().enumerate() {
        u[node] = [x[2 * k], x[2 * k + 1]];
    }
    Ok(u)
}

/// Boundary data on every node: the random field on `BBΩ`, zero on `Ω`.
pub(crate) fn boundary_data(problem: &LpsProblem, eval: impl Fn(Point) -> Result<[f64; 2], DatagenError>) -> Result<Vec<Point>, DatagenError> {
    problem
        .cloud
        .coords()
        .iter()
        .zip(&problem.regions)
        .map(|(&p, r)| if r.is_boundary() { eval(p) } else { Ok([0.0, 0.0]) })
        .collect()
}
