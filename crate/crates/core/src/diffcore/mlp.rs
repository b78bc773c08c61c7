//! Fully connected networks built from tape primitives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiffError, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

/// One affine layer `x·W + b` followed by an activation. `W` is `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, DiffError> {
        if layers.is_empty() {
            return Err(DiffError::ShapeMismatch {
                op: "mlp",
                detail: "an MLP needs at least one layer".into(),
            });
        }
        for (i, l) in layers.iter().enumerate() {
            let [_, out] = l.weight.shape() else {
                return Err(DiffError::ShapeMismatch {
                    op: "mlp",
                    detail: format!("layer {} weight has shape {:?}", i, l.weight.shape()),
                });
            };
            if l.bias.shape() != [*out] {
                return Err(DiffError::ShapeMismatch {
                    op: "mlp",
                    detail: format!("layer {} bias {:?} for width {}", i, l.bias.shape(), out),
                });
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            let out = pair[0].weight.shape()[1];
            let inp = pair[1].weight.shape()[0];
            if out != inp {
                return Err(DiffError::ShapeMismatch {
                    op: "mlp",
                    detail: format!("layer {} emits {} but layer {} expects {}", i, out, i + 1, inp),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Random layers of the given widths. Weights and biases are drawn from
    /// `U[-1/√fan_in, 1/√fan_in]`; hidden layers use ReLU and the last layer
    /// uses `last`.
    pub fn init(widths: &[usize], last: Activation, rng: &mut impl Rng) -> Result<Self, DiffError> {
        if widths.len() < 2 {
            return Err(DiffError::ShapeMismatch {
                op: "mlp",
                detail: format!("width chain {:?} has no layers", widths),
            });
        }
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-bound..=bound)).collect() };
                DenseLayer {
                    weight: Tensor::raw(vec![fan_in, fan_out], draw(fan_in * fan_out)),
                    bias: Tensor::raw(vec![fan_out], draw(fan_out)),
                    activation: if i + 1 == n { last } else { Activation::Relu },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// `[in, hidden…, out]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.shape()[0]];
        w.extend(self.layers.iter().map(|l| l.weight.shape()[1]));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.shape()[1]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Registers every layer as leaves on `tape`.
    pub fn to_vars(&self, tape: &Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()), l.activation))
                .collect(),
        }
    }

    /// Same as [`MlpParams::to_vars`] but as constants (no gradients).
    pub fn to_constants(&self, tape: &Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()), l.activation))
                .collect(),
        }
    }

    /// Evaluates the network on `x` (rows are samples) without recording.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, DiffError> {
        let tape = Tape::no_grad();
        let vars = self.to_constants(&tape);
        let xv = tape.constant(x.clone());
        Ok(mlp_forward(&tape, &vars, &xv)?.to_tensor())
    }
}

/// An MLP whose tensors live on a tape.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var, Activation)>,
}

impl MlpVars {
    pub fn input_width(&self) -> usize {
        self.layers[0].0.shape()[0]
    }

    /// Tensors in `(weight, bias)` layer order.
    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.layers.iter().flat_map(|(w, b, _)| [w, b])
    }
}

/// Applies the affine+activation chain to the rows of `x`.
pub fn mlp_forward(tape: &Tape, mlp: &MlpVars, x: &Var) -> Result<Var, DiffError> {
    let cols = match x.shape() {
        [_, c] => *c,
        s => {
            return Err(DiffError::ShapeMismatch {
                op: "mlp_forward",
                detail: format!("input must be 2-D, got {:?}", s),
            })
        }
    };
    if cols != mlp.input_width() {
        return Err(DiffError::ShapeMismatch {
            op: "mlp_forward",
            detail: format!("input width {} but first layer expects {}", cols, mlp.input_width()),
        });
    }
    let mut h = x.clone();
    for (w, b, act) in &mlp.layers {
        h = tape.add_bias(&tape.matmul(&h, w)?, b)?;
        if *act == Activation::Relu {
            h = tape.relu(&h)?;
        }
    }
    Ok(h)
}
