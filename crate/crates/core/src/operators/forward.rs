use std::borrow::Cow;
use std::rc::Rc;

use super::params::{ModelParams, ModelVars};
use super::{Architecture, OperatorConfig, OperatorError};
use crate::diffcore::{grad_check, mlp_forward, EdgeList, GradCheckOptions, GradCheckReport, MlpVars, Tape, Tensor, Var};
use crate::geometry::{edge_features, norm, sub, PointCloud};

/// Parameter-independent data for one sample: integration graph, kernel
/// features, lifting input and coordinate-update coefficients.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub edges: EdgeList,
    /// Quadrature weight of each edge: `w_y`, rescaled by a cloud-wide
    /// factor when the integration radius is finite.
    pub edge_weights: Vec<f64>,
    /// `E × n` kernel inputs.
    pub features: Tensor,
    /// `M × k` lifting inputs.
    pub lift_input: Tensor,
    /// `M × 2` undeformed coordinates.
    pub coords: Tensor,
    /// `E × 2` rows `w_y·(x − y)` for coordinate-tracking variants.
    pub coef: Option<Tensor>,
}

impl PreparedSample {
    pub fn num_nodes(&self) -> usize {
        self.edges.num_nodes()
    }
}

/// Hidden features `h` (`M × d_h`) and, for coordinate-tracking variants,
/// the coordinate function (`M × 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Tensor,
    pub xcoord: Option<Tensor>,
}

fn integration_graph(cloud: &PointCloud, radius: Option<f64>) -> Result<EdgeList, OperatorError> {
    let m = cloud.len();
    match radius {
        None => Ok(EdgeList::complete(m)),
        Some(r) => {
            let c = cloud.coords();
            let neighbors: Vec<Vec<usize>> = (0..m)
                .map(|i| (0..m).filter(|&j| norm(sub(c[j], c[i])) <= r).collect())
                .collect();
            Ok(EdgeList::from_neighbors(&neighbors)?)
        }
    }
}

/// Cloud-wide factor `πδ²/max_x Σ_{y∈B(x)} w_y` applied to finite-radius
/// quadrature weights, so the fullest neighborhood carries exactly the ball
/// area. Uniform `|Ω|/M` weights put a resolution-dependent mass inside a
/// fixed ball (0.176 on a 16×16 unit grid against 0.184 on 31×31 for
/// δ = 0.25). Balls cut by the boundary keep their smaller mass.
fn ball_scale(cloud: &PointCloud, edges: &EdgeList, radius: Option<f64>) -> f64 {
    let Some(r) = radius else { return 1.0 };
    let w = cloud.weights();
    let mut mass = vec![0.0; cloud.len()];
    for (_, x, y) in edges.iter() {
        mass[x] += w[y];
    }
    std::f64::consts::PI * r * r / mass.into_iter().fold(0.0, f64::max)
}

fn check_input(config: &OperatorConfig, cloud: &PointCloud, f: &Tensor) -> Result<(), OperatorError> {
    let width = config.f_layout.width();
    if f.ndim() != 2 || f.rows() != cloud.len() || f.cols() != width {
        return Err(OperatorError::Shape(format!(
            "input field of shape {:?} does not match {} nodes × {} channels (layout {})",
            f.shape(),
            cloud.len(),
            width,
            config.f_layout
        )));
    }
    Ok(())
}

fn invariants(config: &OperatorConfig, f: &Tensor) -> Result<Vec<Vec<f64>>, OperatorError> {
    (0..f.rows())
        .map(|i| {
            let mut out = Vec::with_capacity(config.f_layout.invariant_width());
            config.f_layout.invariant_features(f.row(i), &mut out)?;
            Ok(out)
        })
        .collect()
}

fn push_features(
    config: &OperatorConfig,
    cloud: &PointCloud,
    f: &Tensor,
    inv: &[Vec<f64>],
    i: usize,
    j: usize,
    out: &mut Vec<f64>,
) {
    let c = cloud.coords();
    match config.architecture {
        Architecture::Gno => {
            out.extend_from_slice(&c[i]);
            out.extend_from_slice(&c[j]);
            out.extend_from_slice(f.row(i));
            out.extend_from_slice(f.row(j));
        }
        Architecture::NormIno => {
            out.push(norm(sub(c[j], c[i])));
            out.extend_from_slice(&inv[i]);
            out.extend_from_slice(&inv[j]);
        }
        _ => {
            let e = if i == j { [0.0, 0.0] } else { edge_features(sub(c[j], c[i]), cloud.ref_vector()) };
            out.extend_from_slice(&e);
            out.extend_from_slice(&inv[i]);
            out.extend_from_slice(&inv[j]);
        }
    }
}

fn normalized<'a>(config: &OperatorConfig, f: &'a Tensor) -> Cow<'a, Tensor> {
    match &config.normalizer {
        Some(n) => Cow::Owned(n.normalize_input(&config.f_layout, f)),
        None => Cow::Borrowed(f),
    }
}

/// Kernel input for the edge from node `i` to node `j`.
pub fn kernel_features(
    config: &OperatorConfig,
    cloud: &PointCloud,
    f: &Tensor,
    i: usize,
    j: usize,
) -> Result<Vec<f64>, OperatorError> {
    check_input(config, cloud, f)?;
    let f = &normalized(config, f);
    let m = cloud.len();
    if i >= m || j >= m {
        return Err(OperatorError::Shape(format!("edge ({i}, {j}) out of range for {m} nodes")));
    }
    let inv = if config.architecture.is_invariant() { invariants(config, f)? } else { Vec::new() };
    let mut out = Vec::with_capacity(config.kernel_input_width());
    push_features(config, cloud, f, &inv, i, j, &mut out);
    Ok(out)
}

/// Everything the forward pass needs from `(cloud, f)`.
pub fn prepare(config: &OperatorConfig, cloud: &PointCloud, f: &Tensor) -> Result<PreparedSample, OperatorError> {
    config.validate()?;
    check_input(config, cloud, f)?;
    let f = &normalized(config, f);
    let edges = integration_graph(cloud, config.radius)?;
    let inv = if config.architecture.is_invariant() { invariants(config, f)? } else { Vec::new() };
    let n = config.kernel_input_width();
    let mut feats = Vec::with_capacity(edges.num_edges() * n);
    let w = cloud.weights();
    let ball = ball_scale(cloud, &edges, config.radius);
    let mut edge_weights = Vec::with_capacity(edges.num_edges());
    for (_, x, y) in edges.iter() {
        push_features(config, cloud, f, &inv, x, y, &mut feats);
        edge_weights.push(w[y] * ball);
    }
    let m = cloud.len();
    let lift_input = match config.architecture {
        Architecture::Gno => {
            let mut data = Vec::with_capacity(m * config.lift_input_width());
            for (i, p) in cloud.coords().iter().enumerate() {
                data.extend_from_slice(p);
                data.extend_from_slice(f.row(i));
            }
            Tensor::from_shape_vec(vec![m, config.lift_input_width()], data)?
        }
        _ => Tensor::from_shape_vec(vec![m, config.lift_input_width()], inv.concat())?,
    };
    let coef = if config.architecture.tracks_coordinates() {
        let c = cloud.coords();
        let mut data = Vec::with_capacity(2 * edges.num_edges());
        for (e, x, y) in edges.iter() {
            let d = sub(c[x], c[y]);
            data.push(edge_weights[e] * d[0]);
            data.push(edge_weights[e] * d[1]);
        }
        Some(Tensor::from_shape_vec(vec![edges.num_edges(), 2], data)?)
    } else {
        None
    };
    Ok(PreparedSample {
        features: Tensor::from_shape_vec(vec![edges.num_edges(), n], feats)?,
        edges,
        edge_weights,
        lift_input,
        coords: cloud.coords_tensor(),
        coef,
    })
}

/// Kernel evaluations shared by all layers of one forward pass.
struct KernelTerms {
    edges: Rc<EdgeList>,
    weights: Rc<Vec<f64>>,
    coef: Option<Rc<Tensor>>,
    /// `E × (H+1)`: last hidden layer of `κ` with a constant column.
    zaug: Var,
    /// `(H+1)·d × d` with `wp[(k,b)][a] = W̃[k][a·d + b]`.
    wp: Var,
    /// `d × (H+1)·d` with `wr[b][(k,a)] = W̃[k][a·d + b]`.
    wr: Option<Var>,
}

fn kernel_terms(tape: &Tape, config: &OperatorConfig, vars: &ModelVars, prep: &PreparedSample) -> Result<KernelTerms, OperatorError> {
    let d = config.hidden;
    let ne = prep.edges.num_edges();
    let layers = &vars.kernel.layers;
    let (last_w, last_b, _) = layers.last().expect("kernel has layers");
    let body = MlpVars {
        layers: layers[..layers.len() - 1].to_vec(),
    };
    let feat = tape.constant(prep.features.clone());
    let z = mlp_forward(tape, &body, &feat)?;
    let hk = z.shape()[1] + 1;
    let ones = tape.constant(Tensor::filled(&[ne, 1], 1.0));
    let zaug = tape.concat_cols(&[&z, &ones])?;
    let b_row = tape.reshape(last_b, vec![1, d * d])?;
    let waug = tape.concat_rows(&[last_w, &b_row])?;

    let mut idx_p = Vec::with_capacity(hk * d * d);
    for k in 0..hk {
        for b in 0..d {
            for a in 0..d {
                idx_p.push(k * d * d + a * d + b);
            }
        }
    }
    let wp = tape.gather(&waug, Rc::new(idx_p), vec![hk * d, d])?;
    let wr = if config.architecture.tracks_coordinates() {
        let mut idx_r = Vec::with_capacity(hk * d * d);
        for b in 0..d {
            for k in 0..hk {
                for a in 0..d {
                    idx_r.push(k * d * d + a * d + b);
                }
            }
        }
        Some(tape.gather(&waug, Rc::new(idx_r), vec![d, hk * d])?)
    } else {
        None
    };
    Ok(KernelTerms {
        edges: Rc::new(prep.edges.clone()),
        weights: Rc::new(prep.edge_weights.clone()),
        coef: prep.coef.clone().map(Rc::new),
        zaug,
        wp,
        wr,
    })
}

fn lift_on(tape: &Tape, config: &OperatorConfig, vars: &ModelVars, prep: &PreparedSample) -> Result<(Var, Option<Var>), OperatorError> {
    let input = tape.constant(prep.lift_input.clone());
    let h = tape.add_bias(&tape.matmul(&input, &vars.lift.0)?, &vars.lift.1)?;
    let x = config
        .architecture
        .tracks_coordinates()
        .then(|| tape.constant(prep.coords.clone()));
    Ok((h, x))
}

fn layer_on(
    tape: &Tape,
    config: &OperatorConfig,
    vars: &ModelVars,
    kt: &KernelTerms,
    h: &Var,
    x: Option<&Var>,
) -> Result<(Var, Option<Var>), OperatorError> {
    let g = tape.kernel_integral(&kt.zaug, h, kt.edges.clone(), kt.weights.clone())?;
    let integral = tape.matmul(&g, &kt.wp)?;
    let local = tape.matmul(h, &vars.layer.0)?;
    let pre = tape.add_bias(&tape.add(&local, &integral)?, &vars.layer.1)?;
    let act = tape.relu(&pre)?;

    let x_next = match (x, &kt.wr, &vars.phi, &kt.coef) {
        (Some(x), Some(wr), Some(phi), Some(coef)) => {
            let t = tape.matmul(h, wr)?;
            let mh = tape.edge_contract(&kt.zaug, &t, kt.edges.clone())?;
            let s = mlp_forward(tape, phi, &mh)?;
            let dx = tape.edge_scatter(&s, coef.clone(), kt.edges.clone())?;
            Some(tape.add(x, &tape.scale(&dx, config.tau)?)?)
        }
        (None, ..) => None,
        _ => return Err(OperatorError::Config("coordinate update requires φ parameters".into())),
    };
    let h_next = if config.architecture.is_residual() {
        tape.add(h, &tape.scale(&act, config.tau)?)?
    } else {
        act
    };
    Ok((h_next, x_next))
}

fn project_on(
    tape: &Tape,
    config: &OperatorConfig,
    vars: &ModelVars,
    prep: &PreparedSample,
    h: &Var,
    x: Option<&Var>,
) -> Result<Var, OperatorError> {
    let out_scale = config.normalizer.as_ref().map(|n| n.output_columns(&config.u_layout));
    match (config.architecture, x) {
        (Architecture::InoVectorPosition, Some(x)) if out_scale.is_none() => Ok(x.clone()),
        (Architecture::InoVector | Architecture::InoVectorPosition, Some(x)) => {
            let coords = tape.constant(prep.coords.clone());
            let mut disp = tape.sub(x, &coords)?;
            if let Some((scale, _)) = &out_scale {
                // Vector groups carry no shift; one group means one scale.
                disp = tape.scale(&disp, scale[0])?;
            }
            if config.architecture == Architecture::InoVectorPosition {
                disp = tape.add(&disp, &coords)?;
            }
            Ok(disp)
        }
        (a, None) if !a.tracks_coordinates() => {
            let proj = vars
                .proj
                .as_ref()
                .ok_or_else(|| OperatorError::Config("projection parameters missing".into()))?;
            let out = mlp_forward(tape, proj, h)?;
            match out_scale {
                None => Ok(out),
                Some((scale, shift)) => {
                    let rows = out.shape()[0];
                    let s = Tensor::from_shape_vec(vec![rows, scale.len()], scale.repeat(rows))?;
                    let scaled = tape.mul(&out, &tape.constant(s))?;
                    let b = Tensor::from_shape_vec(vec![shift.len()], shift)?;
                    Ok(tape.add_bias(&scaled, &tape.constant(b))?)
                }
            }
        }
        (a, _) => Err(OperatorError::Config(format!("layer state does not match architecture {a}"))),
    }
}

fn check_prepared(config: &OperatorConfig, prep: &PreparedSample) -> Result<(), OperatorError> {
    if prep.features.cols() != config.kernel_input_width() || prep.lift_input.cols() != config.lift_input_width() {
        return Err(OperatorError::Shape(format!(
            "prepared sample has kernel/lift widths {}/{}, architecture needs {}/{}",
            prep.features.cols(),
            prep.lift_input.cols(),
            config.kernel_input_width(),
            config.lift_input_width()
        )));
    }
    if config.architecture.tracks_coordinates() != prep.coef.is_some() {
        return Err(OperatorError::Shape("prepared sample was built for another architecture".into()));
    }
    Ok(())
}

/// Lift, `L` shared layers and projection recorded on `tape`.
pub fn forward_on_tape(
    tape: &Tape,
    config: &OperatorConfig,
    vars: &ModelVars,
    prep: &PreparedSample,
) -> Result<Var, OperatorError> {
    config.validate()?;
    check_prepared(config, prep)?;
    let kt = kernel_terms(tape, config, vars, prep)?;
    let (mut h, mut x) = lift_on(tape, config, vars, prep)?;
    for _ in 0..config.layers {
        let (hn, xn) = layer_on(tape, config, vars, &kt, &h, x.as_ref())?;
        h = hn;
        x = xn;
    }
    project_on(tape, config, vars, prep, &h, x.as_ref())
}

/// Output field for a prepared sample, without gradients.
pub fn forward_prepared(params: &ModelParams, prep: &PreparedSample) -> Result<Tensor, OperatorError> {
    let tape = Tape::no_grad();
    let vars = params.to_constants(&tape);
    Ok(forward_on_tape(&tape, &params.config, &vars, prep)?.to_tensor())
}

/// Output field `u` (`M × d_u`) for input `f` on `cloud`.
pub fn forward(params: &ModelParams, cloud: &PointCloud, f: &Tensor) -> Result<Tensor, OperatorError> {
    let prep = prepare(&params.config, cloud, f)?;
    forward_prepared(params, &prep)
}

/// Initial layer state.
pub fn lift(params: &ModelParams, prep: &PreparedSample) -> Result<LayerState, OperatorError> {
    check_prepared(&params.config, prep)?;
    let tape = Tape::no_grad();
    let vars = params.to_constants(&tape);
    let (h, x) = lift_on(&tape, &params.config, &vars, prep)?;
    Ok(LayerState {
        h: h.to_tensor(),
        xcoord: x.map(|x| x.to_tensor()),
    })
}

/// One iterative layer applied to `state`.
pub fn layer_update(params: &ModelParams, prep: &PreparedSample, state: &LayerState) -> Result<LayerState, OperatorError> {
    check_prepared(&params.config, prep)?;
    let tape = Tape::no_grad();
    let vars = params.to_constants(&tape);
    let kt = kernel_terms(&tape, &params.config, &vars, prep)?;
    let h = tape.constant(state.h.clone());
    let x = state.xcoord.as_ref().map(|x| tape.constant(x.clone()));
    let (h, x) = layer_on(&tape, &params.config, &vars, &kt, &h, x.as_ref())?;
    Ok(LayerState {
        h: h.to_tensor(),
        xcoord: x.map(|x| x.to_tensor()),
    })
}

/// Output field from a final layer state.
pub fn project(params: &ModelParams, prep: &PreparedSample, state: &LayerState) -> Result<Tensor, OperatorError> {
    let tape = Tape::no_grad();
    let vars = params.to_constants(&tape);
    let h = tape.constant(state.h.clone());
    let x = state.xcoord.as_ref().map(|x| tape.constant(x.clone()));
    Ok(project_on(&tape, &params.config, &vars, prep, &h, x.as_ref())?.to_tensor())
}

/// Layer states after lifting and after each of the `L` layers.
pub fn trace(params: &ModelParams, prep: &PreparedSample) -> Result<Vec<LayerState>, OperatorError> {
    check_prepared(&params.config, prep)?;
    let tape = Tape::no_grad();
    let config = &params.config;
    let vars = params.to_constants(&tape);
    let kt = kernel_terms(&tape, config, &vars, prep)?;
    let (mut h, mut x) = lift_on(&tape, config, &vars, prep)?;
    let snapshot = |h: &Var, x: &Option<Var>| LayerState {
        h: h.to_tensor(),
        xcoord: x.as_ref().map(|x| x.to_tensor()),
    };
    let mut states = vec![snapshot(&h, &x)];
    for _ in 0..config.layers {
        let (hn, xn) = layer_on(&tape, config, &vars, &kt, &h, x.as_ref())?;
        h = hn;
        x = xn;
        states.push(snapshot(&h, &x));
    }
    Ok(states)
}

/// Tape gradients of `Σ G[f]·probe` against central differences for every
/// parameter group.
pub fn gradient_check(
    params: &ModelParams,
    cloud: &PointCloud,
    f: &Tensor,
    probe: &Tensor,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, OperatorError> {
    let config = &params.config;
    let prep = prepare(config, cloud, f)?;
    let named: Vec<(String, Tensor)> = params.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
    grad_check(
        &named,
        |tape: &Tape, vs| -> Result<_, OperatorError> {
            let vars = params.vars_from(vs)?;
            let u = forward_on_tape(tape, config, &vars, &prep)?;
            Ok(tape.sum(&tape.mul(&u, &tape.constant(probe.clone()))?)?)
        },
        opts,
    )
}
