//! Tape gradients versus central finite differences.

use serde::{Deserialize, Serialize};

use super::{DiffError, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Groups passed to the closure as constants. Their tape gradient is
    /// zero by construction and they are not perturbed.
    pub frozen: Vec<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-6,
            frozen: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    /// `max|g − fd| / max(max|g|, max|fd|)`; 0 when both are identically zero.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub frozen: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups.iter().filter(|g| !g.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().fold(0.0, |m, g| m.max(g.max_rel_error))
    }
}

/// Group-normalized relative error between two gradient tensors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> (f64, f64) {
    let abs = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let rel = if abs == 0.0 { 0.0 } else { abs / scale };
    (rel, abs)
}

/// Compares tape gradients of a scalar-valued `forward` against central
/// differences for every named parameter group.
///
/// `forward` receives one var per group in `params` order and must be
/// deterministic.
pub fn grad_check<F, E>(params: &[(String, Tensor)], forward: F, opts: &GradCheckOptions) -> Result<GradCheckReport, E>
where
    F: Fn(&Tape, &[Var]) -> Result<Var, E>,
    E: From<DiffError>,
{
    let is_frozen = |name: &str| opts.frozen.iter().any(|f| f == name);

    let tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|(name, t)| if is_frozen(name) { tape.constant(t.clone()) } else { tape.leaf(t.clone()) })
        .collect();
    let loss = forward(&tape, &vars)?;
    let grads = tape.backward(&loss)?;

    let eval = |values: &[Tensor]| -> Result<f64, E> {
        let t = Tape::no_grad();
        let vs: Vec<Var> = values.iter().map(|v| t.constant(v.clone())).collect();
        Ok(forward(&t, &vs)?.value().item()?)
    };

    let mut current: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut groups = Vec::with_capacity(params.len());
    for (gi, (name, tensor)) in params.iter().enumerate() {
        let analytic = grads.wrt(&vars[gi]);
        let frozen = is_frozen(name);
        let numeric = if frozen {
            vec![0.0; tensor.len()]
        } else {
            let mut fd = Vec::with_capacity(tensor.len());
            for i in 0..tensor.len() {
                let orig = tensor.data()[i];
                current[gi].data_mut()[i] = orig + opts.step;
                let plus = eval(&current)?;
                current[gi].data_mut()[i] = orig - opts.step;
                let minus = eval(&current)?;
                current[gi].data_mut()[i] = orig;
                fd.push((plus - minus) / (2.0 * opts.step));
            }
            fd
        };
        let (rel, abs) = relative_error(analytic.data(), &numeric);
        groups.push(GroupReport {
            name: name.clone(),
            max_rel_error: rel,
            max_abs_error: abs,
            frozen,
            passed: rel <= opts.tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        groups,
    })
}
