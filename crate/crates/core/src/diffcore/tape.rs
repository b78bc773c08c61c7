//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive computes its value eagerly. When the tape is recording
//! and at least one input depends on a leaf, the primitive is appended to
//! the tape together with whatever forward values its backward rule needs.
//! [`Tape::backward`] walks the recorded operations in exact reverse order.
//!
//! Recording never changes a forward value: the same kernels run whether or
//! not anything is recorded.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use super::graph::EdgeList;
use super::kernels;
use super::{DiffError, Tensor};

type Result<T> = std::result::Result<T, DiffError>;

/// Backward rule for [`Tape::custom`]: maps the output gradient to one
/// gradient per input.
pub type CustomBackward = Rc<dyn Fn(&Tensor, &[Rc<Tensor>]) -> Vec<Tensor>>;

/// A value produced on (or outside) a tape.
///
/// `id` is `Some` only for values that depend on a leaf and were recorded.
#[derive(Clone)]
pub struct Var {
    id: Option<usize>,
    value: Rc<Tensor>,
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn id(&self) -> Option<usize> {
        self.id
    }

    pub fn requires_grad(&self) -> bool {
        self.id.is_some()
    }

    pub fn to_tensor(&self) -> Tensor {
        (*self.value).clone()
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &self.value)
            .finish()
    }
}

#[derive(Clone)]
struct Input {
    id: Option<usize>,
    value: Rc<Tensor>,
}

impl From<&Var> for Input {
    fn from(v: &Var) -> Self {
        Input {
            id: v.id,
            value: v.value.clone(),
        }
    }
}

enum Op {
    Leaf,
    MatMul { a: Input, b: Input },
    Add { a: Option<usize>, b: Option<usize> },
    Sub { a: Option<usize>, b: Option<usize> },
    Mul { a: Input, b: Input },
    Scale { a: Option<usize>, c: f64 },
    AddBias { a: Option<usize>, b: Option<usize>, b_shape: Vec<usize>, cols: usize },
    Relu { a: Option<usize>, out: Rc<Tensor> },
    Sum { a: Option<usize>, shape: Vec<usize> },
    L2Norm { a: Input, norm: f64 },
    ConcatCols { parts: Vec<(Option<usize>, usize)>, rows: usize },
    ConcatRows { parts: Vec<(Option<usize>, usize)>, cols: usize },
    SliceCols { a: Option<usize>, in_cols: usize, start: usize, end: usize },
    Gather { a: Option<usize>, idx: Rc<Vec<usize>>, in_shape: Vec<usize> },
    GatherRows { a: Option<usize>, idx: Rc<Vec<usize>>, in_shape: Vec<usize> },
    Reshape { a: Option<usize>, in_shape: Vec<usize> },
    KernelIntegral { z: Input, h: Input, edges: Rc<EdgeList>, weights: Rc<Vec<f64>> },
    EdgeContract { z: Input, t: Input, edges: Rc<EdgeList> },
    EdgeScatter { phi: Option<usize>, coef: Rc<Tensor>, edges: Rc<EdgeList> },
    Custom { inputs: Vec<Input>, backward: CustomBackward },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::AddBias { .. } => "add_bias",
            Op::Relu { .. } => "relu",
            Op::Sum { .. } => "sum",
            Op::L2Norm { .. } => "l2norm",
            Op::ConcatCols { .. } => "concat_cols",
            Op::ConcatRows { .. } => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::Gather { .. } => "gather",
            Op::GatherRows { .. } => "gather_rows",
            Op::Reshape { .. } => "reshape",
            Op::KernelIntegral { .. } => "kernel_integral",
            Op::EdgeContract { .. } => "edge_contract",
            Op::EdgeScatter { .. } => "edge_scatter",
            Op::Custom { .. } => "custom",
        }
    }
}

/// Ordered record of primitive operations.
pub struct Tape {
    nodes: RefCell<Vec<Op>>,
    recording: bool,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        var.id.and_then(|id| self.grads.get(&id))
    }

    /// Gradient for `var`, or zeros of its shape when it did not influence
    /// the loss (or is not a leaf).
    pub fn wrt(&self, var: &Var) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

fn shape_err(op: &'static str, detail: String) -> DiffError {
    DiffError::ShapeMismatch { op, detail }
}

fn as_matrix(op: &'static str, v: &Var) -> Result<(usize, usize)> {
    match v.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err(op, format!("expected a 2-D operand, got {:?}", s))),
    }
}

impl Tape {
    /// A recording tape.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            checked: false,
        }
    }

    /// A tape that records nothing; leaves behave as constants.
    pub fn no_grad() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: false,
            checked: false,
        }
    }

    /// In checked mode every primitive output and every leaf gradient is
    /// validated to be finite.
    pub fn checked(mut self, checked: bool) -> Self {
        self.checked = checked;
        self
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Names of the recorded primitives, in recording order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.borrow().iter().map(Op::name).collect()
    }

    /// A trainable input.
    pub fn leaf(&self, value: Tensor) -> Var {
        let value = Rc::new(value);
        if !self.recording {
            return Var { id: None, value };
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Op::Leaf);
        Var {
            id: Some(nodes.len() - 1),
            value,
        }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        Var {
            id: None,
            value: Rc::new(value),
        }
    }

    fn finish(&self, name: &'static str, value: Tensor, needs: bool, op: impl FnOnce(Rc<Tensor>) -> Op) -> Result<Var> {
        if self.checked {
            if let Some(i) = value.data().iter().position(|v| !v.is_finite()) {
                return Err(DiffError::NonFinite { op: name, index: i });
            }
        }
        let value = Rc::new(value);
        if !(self.recording && needs) {
            return Ok(Var { id: None, value });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(op(value.clone()));
        Ok(Var {
            id: Some(nodes.len() - 1),
            value,
        })
    }

    pub fn matmul(&self, a: &Var, b: &Var) -> Result<Var> {
        let (m, k) = as_matrix("matmul", a)?;
        let (k2, n) = as_matrix("matmul", b)?;
        if k != k2 {
            return Err(shape_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(false, false, m, k, n, a.value.data(), b.value.data(), 0.0, &mut out);
        let needs = a.id.is_some() || b.id.is_some();
        self.finish("matmul", Tensor::raw(vec![m, n], out), needs, |_| Op::MatMul {
            a: a.into(),
            b: b.into(),
        })
    }

    fn same_shape(op: &'static str, a: &Var, b: &Var) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        Ok(())
    }

    fn zip(a: &Var, b: &Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = a
            .value
            .data()
            .iter()
            .zip(b.value.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::raw(a.shape().to_vec(), data)
    }

    pub fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        Self::same_shape("add", a, b)?;
        let out = Self::zip(a, b, |x, y| x + y);
        self.finish("add", out, a.id.is_some() || b.id.is_some(), |_| Op::Add { a: a.id, b: b.id })
    }

    pub fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        Self::same_shape("sub", a, b)?;
        let out = Self::zip(a, b, |x, y| x - y);
        self.finish("sub", out, a.id.is_some() || b.id.is_some(), |_| Op::Sub { a: a.id, b: b.id })
    }

    /// Elementwise product.
    pub fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        Self::same_shape("mul", a, b)?;
        let out = Self::zip(a, b, |x, y| x * y);
        self.finish("mul", out, a.id.is_some() || b.id.is_some(), |_| Op::Mul {
            a: a.into(),
            b: b.into(),
        })
    }

    pub fn scale(&self, a: &Var, c: f64) -> Result<Var> {
        let out = a.value.map(|v| c * v);
        self.finish("scale", out, a.id.is_some(), |_| Op::Scale { a: a.id, c })
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&self, a: &Var, b: &Var) -> Result<Var> {
        let (_, n) = as_matrix("add_bias", a)?;
        if b.value.len() != n || b.shape().len() > 2 || (b.shape().len() == 2 && b.shape()[0] != 1) {
            return Err(shape_err("add_bias", format!("{:?} + bias {:?}", a.shape(), b.shape())));
        }
        let bias = b.value.data();
        let mut out = a.value.data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let needs = a.id.is_some() || b.id.is_some();
        self.finish("add_bias", Tensor::raw(a.shape().to_vec(), out), needs, |_| Op::AddBias {
            a: a.id,
            b: b.id,
            b_shape: b.shape().to_vec(),
            cols: n,
        })
    }

    pub fn relu(&self, a: &Var) -> Result<Var> {
        let out = a.value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.finish("relu", out, a.id.is_some(), |out| Op::Relu { a: a.id, out })
    }

    /// Sum of all entries, as a 0-d tensor.
    pub fn sum(&self, a: &Var) -> Result<Var> {
        let out = Tensor::scalar(a.value.sum());
        self.finish("sum", out, a.id.is_some(), |_| Op::Sum {
            a: a.id,
            shape: a.shape().to_vec(),
        })
    }

    /// Euclidean norm of all entries, as a 0-d tensor.
    pub fn l2norm(&self, a: &Var) -> Result<Var> {
        let norm = a.value.norm();
        self.finish("l2norm", Tensor::scalar(norm), a.id.is_some(), |_| Op::L2Norm {
            a: a.into(),
            norm,
        })
    }

    pub fn concat_cols(&self, parts: &[&Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols", "no operands".into()));
        }
        let rows = as_matrix("concat_cols", parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = as_matrix("concat_cols", p)?;
            if r != rows {
                return Err(shape_err(
                    "concat_cols",
                    format!("row counts differ: {} vs {}", rows, r),
                ));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (p, &c) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.value.data()[i * c..(i + 1) * c]);
            }
        }
        let needs = parts.iter().any(|p| p.id.is_some());
        self.finish("concat_cols", Tensor::raw(vec![rows, total], out), needs, |_| Op::ConcatCols {
            parts: parts.iter().zip(&widths).map(|(p, &c)| (p.id, c)).collect(),
            rows,
        })
    }

    pub fn concat_rows(&self, parts: &[&Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat_rows", "no operands".into()));
        }
        let cols = as_matrix("concat_rows", parts[0])?.1;
        let mut heights = Vec::with_capacity(parts.len());
        let mut out = Vec::new();
        for p in parts {
            let (r, c) = as_matrix("concat_rows", p)?;
            if c != cols {
                return Err(shape_err(
                    "concat_rows",
                    format!("column counts differ: {} vs {}", cols, c),
                ));
            }
            heights.push(r);
            out.extend_from_slice(p.value.data());
        }
        let rows = heights.iter().sum();
        let needs = parts.iter().any(|p| p.id.is_some());
        self.finish("concat_rows", Tensor::raw(vec![rows, cols], out), needs, |_| Op::ConcatRows {
            parts: parts.iter().zip(&heights).map(|(p, &r)| (p.id, r)).collect(),
            cols,
        })
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, a: &Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = as_matrix("slice_cols", a)?;
        if start > end || end > cols {
            return Err(shape_err(
                "slice_cols",
                format!("range {}..{} of {:?}", start, end, a.shape()),
            ));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(rows * w);
        for i in 0..rows {
            out.extend_from_slice(&a.value.data()[i * cols + start..i * cols + end]);
        }
        self.finish("slice_cols", Tensor::raw(vec![rows, w], out), a.id.is_some(), |_| {
            Op::SliceCols {
                a: a.id,
                in_cols: cols,
                start,
                end,
            }
        })
    }

    /// `out.flat[i] = a.flat[idx[i]]`, reshaped to `shape`.
    pub fn gather(&self, a: &Var, idx: Rc<Vec<usize>>, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != idx.len() {
            return Err(shape_err(
                "gather",
                format!("shape {:?} needs {} indices, got {}", shape, n, idx.len()),
            ));
        }
        let src = a.value.data();
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.len()) {
            return Err(DiffError::Index {
                op: "gather",
                index: bad,
                len: src.len(),
            });
        }
        let out = idx.iter().map(|&i| src[i]).collect();
        self.finish("gather", Tensor::raw(shape, out), a.id.is_some(), |_| Op::Gather {
            a: a.id,
            idx,
            in_shape: a.shape().to_vec(),
        })
    }

    /// Row `r` of the output is row `idx[r]` of `a`.
    pub fn gather_rows(&self, a: &Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let (rows, cols) = as_matrix("gather_rows", a)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(DiffError::Index {
                op: "gather_rows",
                index: bad,
                len: rows,
            });
        }
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            out.extend_from_slice(a.value.row(i));
        }
        self.finish("gather_rows", Tensor::raw(vec![idx.len(), cols], out), a.id.is_some(), |_| {
            Op::GatherRows {
                a: a.id,
                idx,
                in_shape: a.shape().to_vec(),
            }
        })
    }

    pub fn reshape(&self, a: &Var, shape: Vec<usize>) -> Result<Var> {
        let out = (*a.value).clone().reshape(shape)?;
        self.finish("reshape", out, a.id.is_some(), |_| Op::Reshape {
            a: a.id,
            in_shape: a.shape().to_vec(),
        })
    }

    /// Quadrature of edge-weighted outer products.
    ///
    /// For `z: E×H` (one row per edge of `edges`), `h: M×d` and per-edge
    /// weights `w`, returns `G: M×(H·d)` with
    /// `G[x][k·d + b] = Σ_{e=(x,y)} w_e · z[e][k] · h[y][b]`.
    pub fn kernel_integral(&self, z: &Var, h: &Var, edges: Rc<EdgeList>, weights: Rc<Vec<f64>>) -> Result<Var> {
        let (ne, hidden) = as_matrix("kernel_integral", z)?;
        let (m, width) = as_matrix("kernel_integral", h)?;
        if ne != edges.num_edges() || m != edges.num_nodes() || weights.len() != ne {
            return Err(shape_err(
                "kernel_integral",
                format!(
                    "z {:?}, h {:?}, {} nodes / {} edges, {} weights",
                    z.shape(),
                    h.shape(),
                    edges.num_nodes(),
                    edges.num_edges(),
                    weights.len()
                ),
            ));
        }
        let out = kernels::kernel_integral(z.value.data(), hidden, h.value.data(), width, &edges, &weights);
        let needs = z.id.is_some() || h.id.is_some();
        self.finish("kernel_integral", Tensor::raw(vec![m, hidden * width], out), needs, |_| {
            Op::KernelIntegral {
                z: z.into(),
                h: h.into(),
                edges,
                weights,
            }
        })
    }

    /// Per-edge contraction `out[e][a] = Σ_k z[e][k] · t[y_e][k·d + a]`
    /// for `z: E×H`, `t: M×(H·d)`; returns `E×d`.
    pub fn edge_contract(&self, z: &Var, t: &Var, edges: Rc<EdgeList>) -> Result<Var> {
        let (ne, hidden) = as_matrix("edge_contract", z)?;
        let (m, tc) = as_matrix("edge_contract", t)?;
        if ne != edges.num_edges() || m != edges.num_nodes() || hidden == 0 || tc % hidden != 0 {
            return Err(shape_err(
                "edge_contract",
                format!("z {:?}, t {:?}, {} edges", z.shape(), t.shape(), edges.num_edges()),
            ));
        }
        let width = tc / hidden;
        let out = kernels::edge_contract(z.value.data(), hidden, t.value.data(), width, &edges);
        let needs = z.id.is_some() || t.id.is_some();
        self.finish("edge_contract", Tensor::raw(vec![ne, width], out), needs, |_| Op::EdgeContract {
            z: z.into(),
            t: t.into(),
            edges,
        })
    }

    /// Scatter per-edge scalars onto source nodes:
    /// `out[x][c] = Σ_{e=(x,·)} coef[e][c] · phi[e]` for `phi: E×1`,
    /// constant `coef: E×C`; returns `M×C`.
    pub fn edge_scatter(&self, phi: &Var, coef: Rc<Tensor>, edges: Rc<EdgeList>) -> Result<Var> {
        let ne = edges.num_edges();
        if phi.value.len() != ne || coef.rows() != ne || coef.ndim() != 2 {
            return Err(shape_err(
                "edge_scatter",
                format!("phi {:?}, coef {:?}, {} edges", phi.shape(), coef.shape(), ne),
            ));
        }
        let channels = coef.cols();
        let out = kernels::edge_scatter(phi.value.data(), coef.data(), channels, &edges);
        let m = edges.num_nodes();
        self.finish("edge_scatter", Tensor::raw(vec![m, channels], out), phi.id.is_some(), |_| {
            Op::EdgeScatter {
                phi: phi.id,
                coef,
                edges,
            }
        })
    }

    /// A user-defined primitive: `value` is the forward result and
    /// `backward` maps the output gradient to per-input gradients.
    pub fn custom(&self, inputs: &[&Var], value: Tensor, backward: CustomBackward) -> Result<Var> {
        let needs = inputs.iter().any(|v| v.id.is_some());
        self.finish("custom", value, needs, |_| Op::Custom {
            inputs: inputs.iter().map(|&v| v.into()).collect(),
            backward,
        })
    }

    /// Gradients of the scalar `loss` with respect to every leaf.
    ///
    /// Leaves that did not influence `loss` are absent from the map;
    /// [`Gradients::wrt`] reports zeros for them.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        if loss.value.len() != 1 {
            return Err(DiffError::NotScalar {
                shape: loss.shape().to_vec(),
            });
        }
        let Some(root) = loss.id else {
            return Ok(Gradients::default());
        };
        let nodes = self.nodes.borrow();
        if root >= nodes.len() {
            return Err(DiffError::NotOnTape);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root + 1];
        grads[root] = Some(Tensor::filled(loss.shape(), 1.0));
        let mut leaves = HashMap::new();

        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let mut push = |id: Option<usize>, t: Tensor| {
                if let Some(id) = id {
                    match &mut grads[id] {
                        Some(acc) => acc.add_assign(&t),
                        slot => *slot = Some(t),
                    }
                }
            };
            match &nodes[i] {
                Op::Leaf => {
                    if self.checked {
                        if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
                            return Err(DiffError::NonFinite {
                                op: "backward",
                                index: j,
                            });
                        }
                    }
                    leaves.insert(i, g);
                }
                Op::MatMul { a, b } => {
                    let (m, k) = (a.value.rows(), a.value.cols());
                    let n = b.value.cols();
                    if a.id.is_some() {
                        let mut da = vec![0.0; m * k];
                        kernels::gemm(false, true, m, n, k, g.data(), b.value.data(), 0.0, &mut da);
                        push(a.id, Tensor::raw(vec![m, k], da));
                    }
                    if b.id.is_some() {
                        let mut db = vec![0.0; k * n];
                        kernels::gemm(true, false, k, m, n, a.value.data(), g.data(), 0.0, &mut db);
                        push(b.id, Tensor::raw(vec![k, n], db));
                    }
                }
                Op::Add { a, b } => {
                    if b.is_some() {
                        push(*b, g.clone());
                    }
                    push(*a, g);
                }
                Op::Sub { a, b } => {
                    if b.is_some() {
                        push(*b, g.map(|v| -v));
                    }
                    push(*a, g);
                }
                Op::Mul { a, b } => {
                    if a.id.is_some() {
                        let d = g.data().iter().zip(b.value.data()).map(|(x, y)| x * y).collect();
                        push(a.id, Tensor::raw(g.shape().to_vec(), d));
                    }
                    if b.id.is_some() {
                        let d = g.data().iter().zip(a.value.data()).map(|(x, y)| x * y).collect();
                        push(b.id, Tensor::raw(g.shape().to_vec(), d));
                    }
                }
                Op::Scale { a, c } => push(*a, g.map(|v| c * v)),
                Op::AddBias { a, b, b_shape, cols } => {
                    if b.is_some() {
                        let mut db = vec![0.0; *cols];
                        for row in g.data().chunks(*cols) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        push(*b, Tensor::raw(b_shape.clone(), db));
                    }
                    push(*a, g);
                }
                Op::Relu { a, out } => {
                    let d = g
                        .data()
                        .iter()
                        .zip(out.data())
                        .map(|(gv, o)| if *o > 0.0 { *gv } else { 0.0 })
                        .collect();
                    push(*a, Tensor::raw(g.shape().to_vec(), d));
                }
                Op::Sum { a, shape } => push(*a, Tensor::filled(shape, g.data()[0])),
                Op::L2Norm { a, norm } => {
                    let s = if *norm > 0.0 { g.data()[0] / norm } else { 0.0 };
                    push(a.id, a.value.map(|v| s * v));
                }
                Op::ConcatCols { parts, rows } => {
                    let total: usize = parts.iter().map(|p| p.1).sum();
                    let mut off = 0;
                    for &(id, c) in parts {
                        if id.is_some() {
                            let mut d = Vec::with_capacity(rows * c);
                            for r in 0..*rows {
                                d.extend_from_slice(&g.data()[r * total + off..r * total + off + c]);
                            }
                            push(id, Tensor::raw(vec![*rows, c], d));
                        }
                        off += c;
                    }
                }
                Op::ConcatRows { parts, cols } => {
                    let mut off = 0;
                    for &(id, r) in parts {
                        if id.is_some() {
                            let d = g.data()[off * cols..(off + r) * cols].to_vec();
                            push(id, Tensor::raw(vec![r, *cols], d));
                        }
                        off += r;
                    }
                }
                Op::SliceCols { a, in_cols, start, end } => {
                    let rows = g.rows();
                    let w = end - start;
                    let mut d = vec![0.0; rows * in_cols];
                    for r in 0..rows {
                        d[r * in_cols + start..r * in_cols + end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    push(*a, Tensor::raw(vec![rows, *in_cols], d));
                }
                Op::Gather { a, idx, in_shape } => {
                    let mut d = Tensor::zeros(in_shape);
                    let dd = d.data_mut();
                    for (&i, &v) in idx.iter().zip(g.data()) {
                        dd[i] += v;
                    }
                    push(*a, d);
                }
                Op::GatherRows { a, idx, in_shape } => {
                    let mut d = Tensor::zeros(in_shape);
                    let cols = d.cols();
                    for (r, &i) in idx.iter().enumerate() {
                        let src = &g.data()[r * cols..(r + 1) * cols];
                        for (dv, s) in d.row_mut(i).iter_mut().zip(src) {
                            *dv += s;
                        }
                    }
                    push(*a, d);
                }
                Op::Reshape { a, in_shape } => {
                    push(*a, Tensor::raw(in_shape.clone(), g.into_data()));
                }
                Op::KernelIntegral { z, h, edges, weights } => {
                    let (dz, dh) = kernels::kernel_integral_backward(
                        z.value.data(),
                        z.value.cols(),
                        h.value.data(),
                        h.value.cols(),
                        edges,
                        weights,
                        g.data(),
                    );
                    push(z.id, Tensor::raw(z.value.shape().to_vec(), dz));
                    push(h.id, Tensor::raw(h.value.shape().to_vec(), dh));
                }
                Op::EdgeContract { z, t, edges } => {
                    let hidden = z.value.cols();
                    let (dz, dt) = kernels::edge_contract_backward(
                        z.value.data(),
                        hidden,
                        t.value.data(),
                        t.value.cols() / hidden,
                        edges,
                        g.data(),
                    );
                    push(z.id, Tensor::raw(z.value.shape().to_vec(), dz));
                    push(t.id, Tensor::raw(t.value.shape().to_vec(), dt));
                }
                Op::EdgeScatter { phi, coef, edges } => {
                    let d = kernels::edge_scatter_backward(coef.data(), coef.cols(), edges, g.data());
                    push(*phi, Tensor::raw(vec![edges.num_edges(), 1], d));
                }
                Op::Custom { inputs, backward } => {
                    let values: Vec<Rc<Tensor>> = inputs.iter().map(|i| i.value.clone()).collect();
                    let gs = backward(&g, &values);
                    if gs.len() != inputs.len() {
                        return Err(shape_err(
                            "custom",
                            format!("backward returned {} gradients for {} inputs", gs.len(), inputs.len()),
                        ));
                    }
                    for (inp, gi) in inputs.iter().zip(gs) {
                        if inp.id.is_some() && gi.shape() != inp.value.shape() {
                            return Err(shape_err(
                                "custom",
                                format!("gradient {:?} for input {:?}", gi.shape(), inp.value.shape()),
                            ));
                        }
                        push(inp.id, gi);
                    }
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }
}
