use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::OperatorError;
use crate::geometry::{ChannelKind, ChannelLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Graph neural operator on raw coordinates and raw inputs.
    Gno,
    /// Invariant operator with a scalar projection head.
    InoScalar,
    /// Invariant operator tracking a coordinate function; outputs the
    /// displacement `x(L·τ) − x`.
    InoVector,
    /// As [`Architecture::InoVector`] but outputs the position `x(L·τ)`.
    InoVectorPosition,
    /// Kernel sees only the edge length instead of its decomposition.
    NormIno,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Gno,
        Architecture::InoScalar,
        Architecture::InoVector,
        Architecture::InoVectorPosition,
        Architecture::NormIno,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Gno => "gno",
            Architecture::InoScalar => "ino_scalar",
            Architecture::InoVector => "ino_vector",
            Architecture::InoVectorPosition => "ino_vector_position",
            Architecture::NormIno => "norm_ino",
        }
    }

    /// Layer update `h + τ·σ(·)` instead of `σ(·)`.
    pub fn is_residual(self) -> bool {
        self != Architecture::Gno
    }

    /// Carries the coordinate function through the layers.
    pub fn tracks_coordinates(self) -> bool {
        matches!(self, Architecture::InoVector | Architecture::InoVectorPosition)
    }

    pub fn is_invariant(self) -> bool {
        self != Architecture::Gno
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| OperatorError::Config(format!("unknown architecture `{s}`")))
    }
}

/// Architecture hyperparameters. Widths list hidden layers only; input
/// and output widths follow from the architecture and layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub architecture: Architecture,
    pub layers: usize,
    pub tau: f64,
    pub hidden: usize,
    pub kernel_hidden: Vec<usize>,
    pub phi_hidden: Vec<usize>,
    pub proj_hidden: Vec<usize>,
    pub f_layout: ChannelLayout,
    pub u_layout: ChannelLayout,
    /// Integration radius in undeformed coordinates; `None` integrates
    /// over the whole cloud.
    pub radius: Option<f64>,
    /// Input and output normalization; `None` feeds raw values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
}

impl OperatorConfig {
    /// Desk-scale defaults: `d_h = 16`, kernel `(n, 128, 256, d_h²)`,
    /// `φ` widths `(d_h, d_h, 1)`, projection `(d_h, 2·d_h, d_u)`, `L = 4`,
    /// `τ = 1/L`.
    pub fn new(architecture: Architecture, f_layout: ChannelLayout, u_layout: ChannelLayout) -> Self {
        let hidden = 16;
        let layers = 4;
        Self {
            architecture,
            layers,
            tau: 1.0 / layers as f64,
            hidden,
            kernel_hidden: vec![128, 256],
            phi_hidden: vec![hidden],
            proj_hidden: vec![2 * hidden],
            f_layout,
            u_layout,
            radius: None,
            normalizer: None,
        }
    }

    /// `d_h = 64` with kernel `(n, 512, 1024, d_h²)`.
    pub fn paper_scale(mut self) -> Self {
        self.set_hidden(64);
        self.kernel_hidden = vec![512, 1024];
        self
    }

    /// Sets `d_h` and the widths derived from it.
    pub fn set_hidden(&mut self, hidden: usize) {
        self.hidden = hidden;
        self.phi_hidden = vec![hidden];
        self.proj_hidden = vec![2 * hidden];
    }

    /// Sets `L` and `τ = 1/L`.
    pub fn set_layers(&mut self, layers: usize) {
        self.layers = layers;
        self.tau = 1.0 / layers.max(1) as f64;
    }

    pub fn kernel_input_width(&self) -> usize {
        match self.architecture {
            Architecture::Gno => 4 + 2 * self.f_layout.width(),
            Architecture::NormIno => 1 + 2 * self.f_layout.invariant_width(),
            _ => 2 + 2 * self.f_layout.invariant_width(),
        }
    }

    pub fn lift_input_width(&self) -> usize {
        match self.architecture {
            Architecture::Gno => 2 + self.f_layout.width(),
            _ => self.f_layout.invariant_width(),
        }
    }

    pub fn kernel_widths(&self) -> Vec<usize> {
        let mut w = vec![self.kernel_input_width()];
        w.extend(&self.kernel_hidden);
        w.push(self.hidden * self.hidden);
        w
    }

    pub fn phi_widths(&self) -> Vec<usize> {
        let mut w = vec![self.hidden];
        w.extend(&self.phi_hidden);
        w.push(1);
        w
    }

    pub fn proj_widths(&self) -> Vec<usize> {
        let mut w = vec![self.hidden];
        w.extend(&self.proj_hidden);
        w.push(self.u_layout.width());
        w
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        let bad = |m: String| Err(OperatorError::Config(m));
        if self.layers < 1 {
            return bad("L must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("τ must be positive, got {}", self.tau));
        }
        if self.hidden < 1 {
            return bad("d_h must be at least 1".into());
        }
        if self.kernel_hidden.is_empty() {
            return bad("kernel network needs at least one hidden layer".into());
        }
        if self.kernel_hidden.iter().chain(&self.phi_hidden).chain(&self.proj_hidden).any(|&w| w == 0) {
            return bad("hidden widths must be positive".into());
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return bad(format!("integration radius must be positive, got {r}"));
            }
        }
        if self.f_layout.kinds().is_empty() {
            return bad("input layout has no channels".into());
        }
        if self.architecture.is_invariant() && self.f_layout.kinds().contains(&ChannelKind::Point2) {
            return bad(format!(
                "{} cannot take position-valued inputs (layout {})",
                self.architecture, self.f_layout
            ));
        }
        if let Some(n) = &self.normalizer {
            n.validate(&self.f_layout, &self.u_layout)?;
        }
        let want = match self.architecture {
            Architecture::InoVector => Some(ChannelKind::Vector2),
            Architecture::InoVectorPosition => Some(ChannelKind::Point2),
            _ => None,
        };
        match want {
            Some(kind) if self.u_layout.kinds() != [kind] => {
                return bad(format!(
                    "{} outputs one {kind:?} group, layout is `{}`",
                    self.architecture, self.u_layout
                ))
            }
            None if self.u_layout.width() == 0 => return bad("output layout has no channels".into()),
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cfg(arch: Architecture) -> OperatorConfig {
        OperatorConfig::new(arch, ChannelLayout::scalar(1), ChannelLayout::scalar(1))
    }

    #[test]
    fn kernel_input_widths_for_scalar_inputs() {
        assert_eq!(scalar_cfg(Architecture::Gno).kernel_input_width(), 6);
        assert_eq!(scalar_cfg(Architecture::InoScalar).kernel_input_width(), 4);
        assert_eq!(scalar_cfg(Architecture::NormIno).kernel_input_width(), 3);
    }

    #[test]
    fn widths_chain() {
        let c = scalar_cfg(Architecture::InoScalar).paper_scale();
        assert_eq!(c.kernel_widths(), vec![4, 512, 1024, 4096]);
        assert_eq!(c.proj_widths(), vec![64, 128, 1]);
        assert_eq!(c.phi_widths(), vec![64, 64, 1]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = scalar_cfg(Architecture::InoScalar);
        c.layers = 0;
        assert!(c.validate().is_err());
        let mut c = scalar_cfg(Architecture::InoScalar);
        c.tau = 0.0;
        assert!(c.validate().is_err());
        assert!(scalar_cfg(Architecture::InoVector).validate().is_err());
        let v = OperatorConfig::new(
            Architecture::InoVector,
            "vector2,scalar".parse().unwrap(),
            "vector2".parse().unwrap(),
        );
        assert!(v.validate().is_ok());
        assert_eq!(v.kernel_input_width(), 6);
    }

    #[test]
    fn parse_architecture_names() {
        assert_eq!("ino-scalar".parse::<Architecture>().unwrap(), Architecture::InoScalar);
        assert_eq!("GNO".parse::<Architecture>().unwrap(), Architecture::Gno);
        assert!("fno".parse::<Architecture>().is_err());
    }

    #[test]
    fn set_layers_keeps_unit_horizon() {
        let mut c = scalar_cfg(Architecture::InoScalar);
        c.set_layers(8);
        assert_eq!(c.tau, 0.125);
    }
}
