use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};

/// Mean-zero Gaussian field with covariance `(−Δ + τ²)^(−α)` in a cosine
/// basis on a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CosineFieldSpec {
    pub alpha: f64,
    pub tau: f64,
    /// Modes per axis (`k = 0..modes`); `(0, 0)` is skipped.
    pub modes: usize,
}

impl Default for CosineFieldSpec {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            tau: 3.0,
            modes: 32,
        }
    }
}

/// One draw of a [`CosineFieldSpec`] field on `rect`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineField {
    rect: Rect,
    modes: usize,
    /// Row-major `modes × modes` amplitudes times standard normals.
    coef: Vec<f64>,
}

impl CosineField {
    pub fn sample(spec: &CosineFieldSpec, rect: Rect, rng: &mut impl Rng) -> Self {
        let k = spec.modes;
        let mut coef = vec![0.0; k * k];
        for k1 in 0..k {
            for k2 in 0..k {
                let z: f64 = rng.sample(StandardNormal);
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let lam = std::f64::consts::PI.powi(2) * (k1 * k1 + k2 * k2) as f64 + spec.tau * spec.tau;
                coef[k1 * k + k2] = lam.powf(-spec.alpha / 2.0) * z;
            }
        }
        Self { rect, modes: k, coef }
    }

    /// A field with explicit coefficients (row-major `modes × modes`).
    pub fn from_coefficients(rect: Rect, modes: usize, coef: Vec<f64>) -> Self {
        assert_eq!(coef.len(), modes * modes, "coefficient count");
        Self { rect, modes, coef }
    }

    fn basis(&self, t: f64, lo: f64, hi: f64) -> Vec<f64> {
        let s = std::f64::consts::PI * (t - lo) / (hi - lo);
        (0..self.modes).map(|k| (k as f64 * s).cos()).collect()
    }

    pub fn eval(&self, p: Point) -> f64 {
        let cx = self.basis(p[0], self.rect.x0, self.rect.x1);
        let cy = self.basis(p[1], self.rect.y0, self.rect.y1);
        let k = self.modes;
        let mut s = 0.0;
        for (k1, a) in cx.iter().enumerate() {
            let row = &self.coef[k1 * k..(k1 + 1) * k];
            s += a * row.iter().zip(&cy).map(|(c, b)| c * b).sum::<f64>();
        }
        s
    }

    /// Values on an `n × n` grid over the rectangle (row-major, `y` rows).
    pub fn eval_grid(&self, n: usize) -> Vec<f64> {
        let coord = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let k = self.modes;
        let cx: Vec<Vec<f64>> = (0..n)
            .map(|i| self.basis(coord(self.rect.x0, self.rect.x1, i), self.rect.x0, self.rect.x1))
            .collect();
        let cy: Vec<Vec<f64>> = (0..n)
            .map(|i| self.basis(coord(self.rect.y0, self.rect.y1, i), self.rect.y0, self.rect.y1))
            .collect();
        // t[j][k1] = Σ_k2 coef[k1][k2]·cy_j[k2]
        let t: Vec<Vec<f64>> = cy
            .iter()
            .map(|c| {
                (0..k)
                    .map(|k1| self.coef[k1 * k..(k1 + 1) * k].iter().zip(c).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(n * n);
        for tj in &t {
            for ci in &cx {
                out.push(tj.iter().zip(ci).map(|(a, b)| a * b).sum());
            }
        }
        out
    }
}
