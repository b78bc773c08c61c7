//! Raw numeric kernels shared by the tape's forward and backward rules.

use super::graph::EdgeList;

/// `C = op(A)·op(B) + beta·C` for row-major operands.
///
/// `A` is stored `m×k` (or `k×m` when `ta`), `B` is stored `k×n` (or `n×k`
/// when `tb`), `C` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    ta: bool,
    tb: bool,
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.fill(0.0);
        } else {
            c.iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above against the strides used here.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `G[x] = Σ_{e ∈ row x} w_e · z_e ⊗ h_{y_e}`, stored as `M × (H·d)`.
pub(crate) fn kernel_integral(
    z: &[f64],
    hidden: usize,
    h: &[f64],
    width: usize,
    edges: &EdgeList,
    edge_weights: &[f64],
) -> Vec<f64> {
    let m = edges.num_nodes();
    let mut out = vec![0.0; m * hidden * width];
    let mut buf = Vec::new();
    for x in 0..m {
        let range = edges.range(x);
        let ex = range.len();
        if ex == 0 {
            continue;
        }
        gather_weighted(&mut buf, h, width, edges, range.clone(), edge_weights);
        let zx = &z[range.start * hidden..range.end * hidden];
        gemm(
            true,
            false,
            hidden,
            ex,
            width,
            zx,
            &buf,
            0.0,
            &mut out[x * hidden * width..(x + 1) * hidden * width],
        );
    }
    out
}

/// Backward of [`kernel_integral`]; returns `(dz, dh)`.
pub(crate) fn kernel_integral_backward(
    z: &[f64],
    hidden: usize,
    h: &[f64],
    width: usize,
    edges: &EdgeList,
    edge_weights: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let m = edges.num_nodes();
    let mut dz = vec![0.0; z.len()];
    let mut dh = vec![0.0; h.len()];
    let mut buf = Vec::new();
    let mut dbuf = Vec::new();
    for x in 0..m {
        let range = edges.range(x);
        let ex = range.len();
        if ex == 0 {
            continue;
        }
        let dg = &dout[x * hidden * width..(x + 1) * hidden * width];
        gather_weighted(&mut buf, h, width, edges, range.clone(), edge_weights);
        gemm(
            false,
            true,
            ex,
            width,
            hidden,
            &buf,
            dg,
            0.0,
            &mut dz[range.start * hidden..range.end * hidden],
        );
        let zx = &z[range.start * hidden..range.end * hidden];
        dbuf.clear();
        dbuf.resize(ex * width, 0.0);
        gemm(false, false, ex, hidden, width, zx, dg, 0.0, &mut dbuf);
        for (local, e) in range.enumerate() {
            let y = edges.targets()[e];
            let w = edge_weights[e];
            let src = &dbuf[local * width..(local + 1) * width];
            for (d, s) in dh[y * width..(y + 1) * width].iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    (dz, dh)
}

fn gather_weighted(
    buf: &mut Vec<f64>,
    h: &[f64],
    width: usize,
    edges: &EdgeList,
    range: std::ops::Range<usize>,
    edge_weights: &[f64],
) {
    buf.clear();
    buf.reserve(range.len() * width);
    for e in range {
        let y = edges.targets()[e];
        let w = edge_weights[e];
        buf.extend(h[y * width..(y + 1) * width].iter().map(|v| w * v));
    }
}

/// `out[e][a] = Σ_k z[e][k] · t[y_e][k·d + a]`.
pub(crate) fn edge_contract(
    z: &[f64],
    hidden: usize,
    t: &[f64],
    width: usize,
    edges: &EdgeList,
) -> Vec<f64> {
    let ne = edges.num_edges();
    let mut out = vec![0.0; ne * width];
    let stride = hidden * width;
    for (e, &y) in edges.targets().iter().enumerate() {
        let ze = &z[e * hidden..(e + 1) * hidden];
        let ty = &t[y * stride..(y + 1) * stride];
        let oe = &mut out[e * width..(e + 1) * width];
        for (k, &zk) in ze.iter().enumerate() {
            if zk == 0.0 {
                continue;
            }
            for (o, tv) in oe.iter_mut().zip(&ty[k * width..(k + 1) * width]) {
                *o += zk * tv;
            }
        }
    }
    out
}

pub(crate) fn edge_contract_backward(
    z: &[f64],
    hidden: usize,
    t: &[f64],
    width: usize,
    edges: &EdgeList,
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let stride = hidden * width;
    let mut dz = vec![0.0; z.len()];
    let mut dt = vec![0.0; t.len()];
    for (e, &y) in edges.targets().iter().enumerate() {
        let ze = &z[e * hidden..(e + 1) * hidden];
        let de = &dout[e * width..(e + 1) * width];
        let ty = &t[y * stride..(y + 1) * stride];
        let dze = &mut dz[e * hidden..(e + 1) * hidden];
        for k in 0..hidden {
            let tk = &ty[k * width..(k + 1) * width];
            dze[k] = tk.iter().zip(de).map(|(a, b)| a * b).sum();
        }
        let dty = &mut dt[y * stride..(y + 1) * stride];
        for (k, &zk) in ze.iter().enumerate() {
            if zk == 0.0 {
                continue;
            }
            for (d, g) in dty[k * width..(k + 1) * width].iter_mut().zip(de) {
                *d += zk * g;
            }
        }
    }
    (dz, dt)
}

/// `out[x_e][c] += coef[e][c] · phi[e]`.
pub(crate) fn edge_scatter(phi: &[f64], coef: &[f64], channels: usize, edges: &EdgeList) -> Vec<f64> {
    let mut out = vec![0.0; edges.num_nodes() * channels];
    for x in 0..edges.num_nodes() {
        let o = &mut out[x * channels..(x + 1) * channels];
        for e in edges.range(x) {
            let p = phi[e];
            for (ov, cv) in o.iter_mut().zip(&coef[e * channels..(e + 1) * channels]) {
                *ov += cv * p;
            }
        }
    }
    out
}

pub(crate) fn edge_scatter_backward(
    coef: &[f64],
    channels: usize,
    edges: &EdgeList,
    dout: &[f64],
) -> Vec<f64> {
    let mut dphi = vec![0.0; edges.num_edges()];
    for x in 0..edges.num_nodes() {
        let d = &dout[x * channels..(x + 1) * channels];
        for e in edges.range(x) {
            dphi[e] = coef[e * channels..(e + 1) * channels]
                .iter()
                .zip(d)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    dphi
}
