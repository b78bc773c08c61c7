use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{CosineField, CosineFieldSpec};
use super::DatagenError;
use crate::geometry::Rect;

/// Two-phase Darcy problem `−∇·(a∇u) = 1` on `[0,1]²` with `u = 0` on the
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DarcyConfig {
    pub fine_resolution: usize,
    pub resolutions: Vec<usize>,
    /// Conductivity where the phase field is positive / non-positive.
    pub values: (f64, f64),
    pub field: CosineFieldSpec,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for DarcyConfig {
    fn default() -> Self {
        Self {
            fine_resolution: 241,
            resolutions: vec![16, 31],
            values: (12.0, 3.0),
            field: CosineFieldSpec::default(),
            n_train: 100,
            n_validation: 40,
            n_test: 40,
            seed: 0,
            tolerance: 1e-10,
        }
    }
}

impl DarcyConfig {
    pub fn num_samples(&self) -> usize {
        self.n_train + self.n_validation + self.n_test
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let (hi, lo) = self.values;
        if !(lo > 0.0) || (hi - 4.0 * lo).abs() > 1e-12 * hi {
            return Err(DatagenError::Config(format!(
                "conductivities must satisfy high = 4·low > 0, got ({hi}, {lo})"
            )));
        }
        if self.fine_resolution < 3 {
            return Err(DatagenError::Config("fine resolution must be at least 3".into()));
        }
        for &r in &self.resolutions {
            stride(self.fine_resolution, r)?;
        }
        Ok(())
    }
}

/// Two-valued conductivity on an `n × n` grid: `hi` where `field > 0`.
pub fn threshold_field(field: &[f64], values: (f64, f64)) -> Vec<f64> {
    field.iter().map(|&v| if v > 0.0 { values.0 } else { values.1 }).collect()
}

/// Random two-phase conductivity on the fine grid.
pub fn sample_conductivity(cfg: &DarcyConfig, rng: &mut impl Rng) -> Vec<f64> {
    let field = CosineField::sample(&cfg.field, Rect::UNIT, rng);
    threshold_field(&field.eval_grid(cfg.fine_resolution), cfg.values)
}

/// Result of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// `n × n` nodal values including the zero boundary, row-major.
    pub u: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Five-point conservative finite differences with harmonic-mean face
/// conductivities, solved by Jacobi-preconditioned conjugate gradients to
/// relative residual `tol`.
pub fn solve_darcy(a: &[f64], n: usize, tol: f64) -> Result<Solution, DatagenError> {
    if a.len() != n * n || n < 3 {
        return Err(DatagenError::Config(format!(
            "conductivity has {} values for a {n}×{n} grid",
            a.len()
        )));
    }
    if let Some(i) = a.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(DatagenError::Config(format!(
            "conductivity must be positive, found {} at node {i}",
            a[i]
        )));
    }
    let m = n - 2;
    let h2 = 1.0 / ((n - 1) as f64).powi(2);
    let at = |i: usize, j: usize| a[j * n + i];
    // Face conductivities / h² for each interior unknown: east, west, north, south.
    let mut faces = vec![[0.0; 4]; m * m];
    let mut diag = vec![0.0; m * m];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let c = at(i, j);
            let f = [
                harmonic(c, at(i + 1, j)) / h2,
                harmonic(c, at(i - 1, j)) / h2,
                harmonic(c, at(i, j + 1)) / h2,
                harmonic(c, at(i, j - 1)) / h2,
            ];
            let k = (j - 1) * m + (i - 1);
            faces[k] = f;
            diag[k] = f.iter().sum();
        }
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        for jj in 0..m {
            for ii in 0..m {
                let k = jj * m + ii;
                let mut s = diag[k] * x[k];
                let f = &faces[k];
                if ii + 1 < m {
                    s -= f[0] * x[k + 1];
                }
                if ii > 0 {
                    s -= f[1] * x[k - 1];
                }
                if jj + 1 < m {
                    s -= f[2] * x[k + m];
                }
                if jj > 0 {
                    s -= f[3] * x[k - m];
                }
                y[k] = s;
            }
        }
    };
    let b = vec![1.0; m * m];
    let (x, iterations, rel) = pcg(apply, &diag, &b, tol, 20 * m * m + 100)?;
    let mut u = vec![0.0; n * n];
    for jj in 0..m {
        for ii in 0..m {
            u[(jj + 1) * n + ii + 1] = x[jj * m + ii];
        }
    }
    Ok(Solution {
        u,
        iterations,
        relative_residual: rel,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64), DatagenError> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok((x, it, rel));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = dot(&r, &r).sqrt() / bnorm;
    Err(DatagenError::NotConverged {
        iterations: max_iter,
        residual: rel,
    })
}

fn stride(fine: usize, coarse: usize) -> Result<usize, DatagenError> {
    if coarse < 2 || coarse > fine || (fine - 1) % (coarse - 1) != 0 {
        return Err(DatagenError::Config(format!(
            "cannot subsample a {fine}×{fine} grid to {coarse}×{coarse} by striding"
        )));
    }
    Ok((fine - 1) / (coarse - 1))
}

/// Picks the fine-grid values at the nodes of a coarse grid on the same
/// square.
pub fn downsample(field: &[f64], fine: usize, coarse: usize) -> Result<Vec<f64>, DatagenError> {
    if field.len() != fine * fine {
        return Err(DatagenError::Config(format!(
            "field has {} values for a {fine}×{fine} grid",
            field.len()
        )));
    }
    let s = stride(fine, coarse)?;
    let mut out = Vec::with_capacity(coarse * coarse);
    for j in 0..coarse {
        for i in 0..coarse {
            out.push(field[j * s * fine + i * s]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Series solution of `−Δu = 1` on the unit square at the centre:
    /// `Σ_{m,n odd} 16/(π⁴ m n (m²+n²))·sin(mπ/2)·sin(nπ/2)`.
    fn poisson_center_series() -> f64 {
        let mut s = 0.0;
        for m in (1..4000usize).step_by(2) {
            for n in (1..4000usize).step_by(2) {
                let (mf, nf) = (m as f64, n as f64);
                let sign = if ((m - 1) / 2 + (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * 16.0 / (PI.powi(4) * mf * nf * (mf * mf + nf * nf));
            }
        }
        s
    }

    fn center(n: usize, a: &[f64]) -> f64 {
        let sol = solve_darcy(a, n, 1e-12).unwrap();
        sol.u[(n / 2) * n + n / 2]
    }

    #[test]
    fn series_oracle_value() {
        let v = poisson_center_series();
        assert!((v - 0.0736713).abs() < 1e-6, "{v}");
    }

    #[test]
    fn unit_conductivity_matches_series() {
        let n = 61;
        let u = center(n, &vec![1.0; n * n]);
        assert!((u - poisson_center_series()).abs() < 2e-4, "{u}");
    }

    #[test]
    fn second_order_on_smooth_conductivity() {
        let solve_on = |n: usize| {
            let h = 1.0 / (n - 1) as f64;
            let a: Vec<f64> = (0..n * n)
                .map(|k| {
                    let (x, y) = ((k % n) as f64 * h, (k / n) as f64 * h);
                    1.0 + 0.5 * (PI * x).sin() * (2.0 * PI * y).cos()
                })
                .collect();
            solve_darcy(&a, n, 1e-13).unwrap().u
        };
        let (u1, u2, u3) = (solve_on(61), solve_on(121), solve_on(241));
        // Compare on the nodes of the 61-grid.
        let mut e12 = 0.0f64;
        let mut e23 = 0.0f64;
        for j in 0..61 {
            for i in 0..61 {
                let a = u1[j * 61 + i];
                let b = u2[2 * j * 121 + 2 * i];
                let c = u3[4 * j * 241 + 4 * i];
                e12 = e12.max((a - b).abs());
                e23 = e23.max((b - c).abs());
            }
        }
        let order = (e12 / e23).log2();
        assert!((1.7..=2.3).contains(&order), "observed order {order}");
    }

    #[test]
    fn solution_scales_inversely_with_conductivity() {
        let n = 21;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = DarcyConfig {
            fine_resolution: n,
            ..Default::default()
        };
        let a = sample_conductivity(&cfg, &mut rng);
        let base = solve_darcy(&a, n, 1e-13).unwrap();
        let scaled: Vec<f64> = a.iter().map(|v| v * 2.5).collect();
        let s = solve_darcy(&scaled, n, 1e-13).unwrap();
        for (x, y) in base.u.iter().zip(&s.u) {
            assert!((x / 2.5 - y).abs() <= 1e-10 * x.abs().max(1e-3));
        }
        assert!(base.u.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn conductivity_is_two_valued_with_ratio_four() {
        let cfg = DarcyConfig {
            fine_resolution: 41,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sample_conductivity(&cfg, &mut rng);
        let mut vals: Vec<f64> = a.clone();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals, vec![3.0, 12.0]);
    }

    #[test]
    fn phase_fractions_are_balanced_on_average() {
        let cfg = DarcyConfig {
            fine_resolution: 31,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut total = 0.0;
        for _ in 0..100 {
            let a = sample_conductivity(&cfg, &mut rng);
            total += a.iter().filter(|&&v| v == 12.0).count() as f64 / a.len() as f64;
        }
        let mean = total / 100.0;
        assert!((mean - 0.5).abs() <= 0.1, "{mean}");
    }

    #[test]
    fn single_sign_field_gives_single_phase() {
        assert!(threshold_field(&[0.3, 1.0, 2.0], (12.0, 3.0)).iter().all(|&v| v == 12.0));
        assert!(threshold_field(&[-0.3, 0.0], (12.0, 3.0)).iter().all(|&v| v == 3.0));
    }

    #[test]
    fn nonpositive_conductivity_rejected() {
        let mut a = vec![1.0; 25];
        a[7] = 0.0;
        assert!(solve_darcy(&a, 5, 1e-10).is_err());
    }

    #[test]
    fn downsample_maps_coordinates() {
        let fine = 241;
        let field: Vec<f64> = (0..fine * fine).map(|k| k as f64).collect();
        for coarse in [16, 31] {
            let out = downsample(&field, fine, coarse).unwrap();
            for j in 0..coarse {
                for i in 0..coarse {
                    let (x, y) = (i as f64 / (coarse - 1) as f64, j as f64 / (coarse - 1) as f64);
                    let fi = (x * (fine - 1) as f64).round() as usize;
                    let fj = (y * (fine - 1) as f64).round() as usize;
                    assert!((fi as f64 - x * (fine - 1) as f64).abs() < 1e-9);
                    assert_eq!(out[j * coarse + i], field[fj * fine + fi]);
                }
            }
        }
        assert_eq!(downsample(&field, fine, fine).unwrap(), field);
        assert!(downsample(&field, fine, 18).is_err());
        assert!(downsample(&[2.0; 9], 3, 2).unwrap().iter().all(|&v| v == 2.0));
    }
}
