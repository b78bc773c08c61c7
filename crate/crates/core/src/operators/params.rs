use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, OperatorConfig, OperatorError};
use crate::diffcore::{Activation, DenseLayer, MlpParams, MlpVars, Tape, Tensor, Var};

/// All trainable tensors of one operator. The layer block `(W, c)`, the
/// kernel network and `φ` are shared by every iterative layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: OperatorConfig,
    pub seed: u64,
    /// Lifting `P, p` as a single affine layer.
    pub lift: DenseLayer,
    /// Local linear term `W` (`d_h × d_h`) and bias `c`.
    pub layer: DenseLayer,
    /// Kernel network `κ`, output reshaped row-major to `d_h × d_h`.
    pub kernel: MlpParams,
    /// Scalar coordinate-update network `φ` (coordinate-tracking variants).
    pub phi: Option<MlpParams>,
    /// Projection `Q₂σ(Q₁h + q₁) + q₂` (scalar-head variants).
    pub proj: Option<MlpParams>,
}

impl ModelParams {
    /// Random initialization, uniform on `±1/√fan_in` per layer.
    pub fn init(config: &OperatorConfig, seed: u64) -> Result<Self, OperatorError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.hidden;
        let single = |widths: &[usize], rng: &mut ChaCha8Rng| -> Result<DenseLayer, OperatorError> {
            Ok(MlpParams::init(widths, Activation::Identity, rng)?.layers()[0].clone())
        };
        let lift = single(&[config.lift_input_width(), d], &mut rng)?;
        let layer = single(&[d, d], &mut rng)?;
        let kernel = MlpParams::init(&config.kernel_widths(), Activation::Identity, &mut rng)?;
        let phi = if config.architecture.tracks_coordinates() {
            Some(MlpParams::init(&config.phi_widths(), Activation::Identity, &mut rng)?)
        } else {
            None
        };
        let proj = if config.architecture.tracks_coordinates() {
            None
        } else {
            Some(MlpParams::init(&config.proj_widths(), Activation::Identity, &mut rng)?)
        };
        Ok(Self {
            config: config.clone(),
            seed,
            lift,
            layer,
            kernel,
            phi,
            proj,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    /// Parameter tensors in canonical order with stable names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("lift.P".to_string(), &self.lift.weight),
            ("lift.p".to_string(), &self.lift.bias),
            ("layer.W".to_string(), &self.layer.weight),
            ("layer.c".to_string(), &self.layer.bias),
        ];
        for (prefix, mlp) in self.networks() {
            for (i, l) in mlp.layers().iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), &l.weight));
                out.push((format!("{prefix}.{i}.bias"), &l.bias));
            }
        }
        out
    }

    /// Mutable views in the order of [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.lift.weight,
            &mut self.lift.bias,
            &mut self.layer.weight,
            &mut self.layer.bias,
        ];
        for mlp in [Some(&mut self.kernel), self.phi.as_mut(), self.proj.as_mut()]
            .into_iter()
            .flatten()
        {
            for l in mlp.layers_mut() {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out
    }

    fn networks(&self) -> Vec<(&'static str, &MlpParams)> {
        let mut v = vec![("kernel", &self.kernel)];
        if let Some(p) = &self.phi {
            v.push(("phi", p));
        }
        if let Some(p) = &self.proj {
            v.push(("proj", p));
        }
        v
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.named().iter().map(|(_, t)| t.sum_squares()).sum()
    }

    /// Rebuilds parameters from named tensors, checking every name and shape.
    pub fn from_named(config: &OperatorConfig, seed: u64, mut tensors: IndexMap<String, Tensor>) -> Result<Self, OperatorError> {
        let mut params = Self::init(config, seed)?;
        let names: Vec<(String, Vec<usize>)> = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        for ((name, shape), slot) in names.into_iter().zip(params.tensors_mut()) {
            let t = tensors
                .shift_remove(&name)
                .ok_or_else(|| OperatorError::Checkpoint(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(OperatorError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, architecture needs {:?}",
                    t.shape(),
                    shape
                )));
            }
            *slot = t;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(OperatorError::Checkpoint(format!("unexpected parameter `{extra}`")));
        }
        Ok(params)
    }

    pub fn to_vars(&self, tape: &Tape) -> ModelVars {
        self.register(tape, true)
    }

    pub fn to_constants(&self, tape: &Tape) -> ModelVars {
        self.register(tape, false)
    }

    /// Rebuilds the structured vars from a flat list in the order of
    /// [`ModelParams::named`].
    pub fn vars_from(&self, flat: &[Var]) -> Result<ModelVars, OperatorError> {
        let expected = self.named().len();
        if flat.len() != expected {
            return Err(OperatorError::Shape(format!(
                "expected {expected} parameter vars, got {}",
                flat.len()
            )));
        }
        let mut it = flat.iter().cloned();
        let mut next = move || it.next().expect("length checked");
        let lift = (next(), next());
        let layer = (next(), next());
        let mut mlp = |m: &MlpParams| MlpVars {
            layers: m.layers().iter().map(|l| (next(), next(), l.activation)).collect(),
        };
        let kernel = mlp(&self.kernel);
        let phi = self.phi.as_ref().map(&mut mlp);
        let proj = self.proj.as_ref().map(&mut mlp);
        Ok(ModelVars {
            lift,
            layer,
            kernel,
            phi,
            proj,
        })
    }

    fn register(&self, tape: &Tape, grad: bool) -> ModelVars {
        let put = |t: &Tensor| if grad { tape.leaf(t.clone()) } else { tape.constant(t.clone()) };
        let mlp = |m: &MlpParams| if grad { m.to_vars(tape) } else { m.to_constants(tape) };
        ModelVars {
            lift: (put(&self.lift.weight), put(&self.lift.bias)),
            layer: (put(&self.layer.weight), put(&self.layer.bias)),
            kernel: mlp(&self.kernel),
            phi: self.phi.as_ref().map(mlp),
            proj: self.proj.as_ref().map(mlp),
        }
    }
}

/// [`ModelParams`] registered on a tape.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub lift: (Var, Var),
    pub layer: (Var, Var),
    pub kernel: MlpVars,
    pub phi: Option<MlpVars>,
    pub proj: Option<MlpVars>,
}

impl ModelVars {
    /// Vars in the order of [`ModelParams::named`].
    pub fn all(&self) -> Vec<&Var> {
        let mut out = vec![&self.lift.0, &self.lift.1, &self.layer.0, &self.layer.1];
        out.extend(self.kernel.vars());
        for m in [&self.phi, &self.proj].into_iter().flatten() {
            out.extend(m.vars());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChannelLayout;

    fn cfg(arch: Architecture) -> OperatorConfig {
        let (f, u) = if arch.tracks_coordinates() {
            let u = if arch == Architecture::InoVector { "vector2" } else { "point2" };
            ("vector2,scalar".parse().unwrap(), u.parse().unwrap())
        } else {
            (ChannelLayout::scalar(1), ChannelLayout::scalar(1))
        };
        let mut c = OperatorConfig::new(arch, f, u);
        c.set_hidden(4);
        c.kernel_hidden = vec![8, 8];
        c
    }

    #[test]
    fn shapes_follow_config() {
        let p = ModelParams::init(&cfg(Architecture::Gno), 1).unwrap();
        let named: Vec<_> = p.named().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        assert_eq!(named[0], ("lift.P".to_string(), vec![3, 4]));
        assert_eq!(named[2], ("layer.W".to_string(), vec![4, 4]));
        assert_eq!(named[4], ("kernel.0.weight".to_string(), vec![6, 8]));
        assert!(named.iter().any(|(n, s)| n == "kernel.2.weight" && s == &vec![8, 16]));
        assert!(named.iter().any(|(n, _)| n.starts_with("proj.")));
        assert!(!named.iter().any(|(n, _)| n.starts_with("phi.")));

        let v = ModelParams::init(&cfg(Architecture::InoVector), 1).unwrap();
        assert!(v.phi.is_some() && v.proj.is_none());
        assert_eq!(v.lift.weight.shape(), &[2, 4]);
    }

    #[test]
    fn named_round_trip_and_vars_order() {
        for arch in Architecture::ALL {
            let p = ModelParams::init(&cfg(arch), 3).unwrap();
            let map: IndexMap<_, _> = p.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
            let q = ModelParams::from_named(&p.config, 3, map).unwrap();
            assert_eq!(p, q);
            let tape = Tape::new();
            let vars = p.to_vars(&tape);
            let all = vars.all();
            assert_eq!(all.len(), p.named().len());
            for (v, (_, t)) in all.iter().zip(p.named()) {
                assert_eq!(v.value(), t);
            }
        }
    }

    #[test]
    fn from_named_rejects_missing_and_bad_shapes() {
        let p = ModelParams::init(&cfg(Architecture::InoScalar), 0).unwrap();
        let mut map: IndexMap<_, _> = p.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
        map.insert("layer.W".into(), Tensor::zeros(&[3, 3]));
        assert!(ModelParams::from_named(&p.config, 0, map.clone()).is_err());
        map.shift_remove("layer.W");
        assert!(ModelParams::from_named(&p.config, 0, map).is_err());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let c = cfg(Architecture::InoScalar);
        assert_eq!(ModelParams::init(&c, 5).unwrap(), ModelParams::init(&c, 5).unwrap());
        assert_ne!(ModelParams::init(&c, 5).unwrap(), ModelParams::init(&c, 6).unwrap());
    }
}
