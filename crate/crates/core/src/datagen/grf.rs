use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::geometry::Point;

/// Two-component boundary-displacement field
/// `G(x) = Re Σ_k ξ_k·exp(i2πk·x/D)·U_k` with `ξ_k = |k|^(−2·decay)` and
/// `U_k ∼ U[0, 1]`, independently per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrfConfig {
    pub k_min: i32,
    pub k_max: i32,
    /// `ξ_k = (k₁² + k₂²)^(−decay)`.
    pub decay: f64,
    /// Period `D`; the field lives on `[−D/2, D/2]²`.
    pub period: f64,
    /// Nodes per axis of the interpolation grid.
    pub grid: usize,
}

impl Default for GrfConfig {
    fn default() -> Self {
        Self {
            k_min: -15,
            k_max: 13,
            decay: 1.25,
            period: 2.8,
            grid: 225,
        }
    }
}

impl GrfConfig {
    /// Wavenumbers in use: the full range squared minus `(0, 0)`.
    pub fn modes(&self) -> Vec<[i32; 2]> {
        let mut out = Vec::new();
        for k1 in self.k_min..=self.k_max {
            for k2 in self.k_min..=self.k_max {
                if (k1, k2) != (0, 0) {
                    out.push([k1, k2]);
                }
            }
        }
        out
    }

    pub fn amplitude(&self, k: [i32; 2]) -> f64 {
        ((k[0] * k[0] + k[1] * k[1]) as f64).powf(-self.decay)
    }
}

/// One draw of the two-component field, tabulated on a grid for bicubic
/// interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GrfField {
    half: f64,
    period: f64,
    modes: Vec<[i32; 2]>,
    /// Per component, `ξ_k·U_k` in `modes` order.
    coef: [Vec<f64>; 2],
    n: usize,
    /// Per component, row-major `n × n` grid values (rows are `y`).
    table: [Vec<f64>; 2],
}

impl GrfField {
    pub fn sample(cfg: &GrfConfig, rng: &mut impl Rng) -> Self {
        let modes = cfg.modes();
        let mut draw = || -> Vec<f64> { modes.iter().map(|&k| cfg.amplitude(k) * rng.random::<f64>()).collect() };
        let c0 = draw();
        let c1 = draw();
        Self::from_coefficients(cfg, [c0, c1])
    }

    /// A field with explicit `ξ_k·U_k` coefficients in [`GrfConfig::modes`] order.
    pub fn from_coefficients(cfg: &GrfConfig, coef: [Vec<f64>; 2]) -> Self {
        let modes = cfg.modes();
        assert!(coef.iter().all(|c| c.len() == modes.len()), "coefficient count");
        let n = cfg.grid.max(4);
        let half = cfg.period / 2.0;
        let mut field = Self {
            half,
            period: cfg.period,
            modes,
            coef,
            n,
            table: [Vec::new(), Vec::new()],
        };
        field.table = [field.tabulate(0), field.tabulate(1)];
        field
    }

    fn node(&self, i: usize) -> f64 {
        -self.half + 2.0 * self.half * i as f64 / (self.n - 1) as f64
    }

    /// `Σ c_k cos(ω(k₁x + k₂y))` on the grid via
    /// `cos(a + b) = cos a cos b − sin a sin b`, separable per wavenumber.
    fn tabulate(&self, comp: usize) -> Vec<f64> {
        let n = self.n;
        let w = 2.0 * std::f64::consts::PI / self.period;
        let mut out = vec![0.0; n * n];
        let xs: Vec<f64> = (0..n).map(|i| self.node(i)).collect();
        for (k, &c) in self.modes.iter().zip(&self.coef[comp]) {
            if c == 0.0 {
                continue;
            }
            let (sx, cx): (Vec<f64>, Vec<f64>) = xs.iter().map(|&x| (w * k[0] as f64 * x).sin_cos()).unzip();
            let (sy, cy): (Vec<f64>, Vec<f64>) = xs.iter().map(|&y| (w * k[1] as f64 * y).sin_cos()).unzip();
            for j in 0..n {
                let row = &mut out[j * n..(j + 1) * n];
                let (a, b) = (c * cy[j], c * sy[j]);
                for i in 0..n {
                    row[i] += a * cx[i] - b * sx[i];
                }
            }
        }
        out
    }

    /// Direct evaluation of the Fourier sum.
    pub fn eval_exact(&self, p: Point) -> [f64; 2] {
        let w = 2.0 * std::f64::consts::PI / self.period;
        let mut out = [0.0; 2];
        for (idx, k) in self.modes.iter().enumerate() {
            let c = (w * (k[0] as f64 * p[0] + k[1] as f64 * p[1])).cos();
            out[0] += self.coef[0][idx] * c;
            out[1] += self.coef[1][idx] * c;
        }
        out
    }

    /// Bicubic (Catmull–Rom) interpolation of the tabulated field.
    pub fn eval(&self, p: Point) -> Result<[f64; 2], DatagenError> {
        let tol = 1e-12;
        if p.iter().any(|v| !v.is_finite() || v.abs() > self.half + tol) {
            return Err(DatagenError::Config(format!(
                "point ({}, {}) lies outside [−{h}, {h}]²",
                p[0],
                p[1],
                h = self.half
            )));
        }
        let n = self.n;
        let h = 2.0 * self.half / (n - 1) as f64;
        let locate = |t: f64| -> (usize, f64) {
            let s = ((t + self.half) / h).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        };
        let (ix, tx) = locate(p[0]);
        let (iy, ty) = locate(p[1]);
        let wx = catmull_rom(tx);
        let wy = catmull_rom(ty);
        let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
        let mut out = [0.0; 2];
        for (c, table) in self.table.iter().enumerate() {
            let mut s = 0.0;
            for (b, wyb) in wy.iter().enumerate() {
                let row = clamp(iy as isize + b as isize - 1);
                for (a, wxa) in wx.iter().enumerate() {
                    let col = clamp(ix as isize + a as isize - 1);
                    s += wyb * wxa * table[row * n + col];
                }
            }
            out[c] = s;
        }
        Ok(out)
    }
}

/// Catmull–Rom weights for the four nodes around a cell at offset `t`.
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mode_count() {
        // 29 wavenumbers per axis, (0, 0) dropped.
        assert_eq!(GrfConfig::default().modes().len(), 29 * 29 - 1);
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let cfg = GrfConfig { grid: 20, ..Default::default() };
        let n = cfg.modes().len();
        let f = GrfField::from_coefficients(&cfg, [vec![0.0; n], vec![0.0; n]]);
        assert_eq!(f.eval([0.3, -0.9]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn interpolation_matches_direct_sum() {
        let cfg = GrfConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = GrfField::sample(&cfg, &mut rng);
        let h = cfg.period / (cfg.grid - 1) as f64;
        let mut scale = 0.0f64;
        let mut err = 0.0f64;
        for i in 0..60 {
            for j in 0..60 {
                // Points at half grid spacing offsets, within radius 1.
                let p = [-1.0 + (2 * i) as f64 * h + 0.5 * h, -1.0 + (2 * j) as f64 * h + 0.5 * h];
                if p[0].abs() > 1.0 || p[1].abs() > 1.0 {
                    continue;
                }
                let exact = f.eval_exact(p);
                let got = f.eval(p).unwrap();
                for c in 0..2 {
                    scale = scale.max(exact[c].abs());
                    err = err.max((exact[c] - got[c]).abs());
                }
            }
        }
        assert!(err <= 1e-3 * scale, "err {err:e}, scale {scale}");
    }

    #[test]
    fn grid_nodes_are_exact() {
        let cfg = GrfConfig { grid: 57, ..Default::default() };
        let f = GrfField::sample(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let p = [f.node(10), f.node(40)];
        let (a, b) = (f.eval(p).unwrap(), f.eval_exact(p));
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn spectral_amplitudes_bound_coefficients() {
        let cfg = GrfConfig { grid: 8, ..Default::default() };
        let f = GrfField::sample(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
        for c in 0..2 {
            for (k, v) in f.modes.iter().zip(&f.coef[c]) {
                assert!(*v >= 0.0 && *v <= cfg.amplitude(*k));
            }
        }
        assert_ne!(f.coef[0], f.coef[1]);
    }

    #[test]
    fn outside_square_rejected() {
        let cfg = GrfConfig { grid: 8, ..Default::default() };
        let f = GrfField::sample(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(f.eval([1.5, 0.0]).is_err());
        assert!(f.eval([1.4, -1.4]).is_ok());
    }
}
