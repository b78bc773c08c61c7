use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GeometryError;

/// How one group of channels behaves under a change of frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Frame-independent value.
    Scalar,
    /// 2-vector rotating with the frame (`v ↦ R·v`).
    Vector2,
    /// 2-D position (`p ↦ R·p + g`).
    Point2,
}

impl ChannelKind {
    pub fn width(self) -> usize {
        match self {
            ChannelKind::Scalar => 1,
            ChannelKind::Vector2 | ChannelKind::Point2 => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ChannelKind::Scalar => "scalar",
            ChannelKind::Vector2 => "vector2",
            ChannelKind::Point2 => "point2",
        }
    }
}

/// Ordered channel groups of a field.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ChannelLayout {
    kinds: Vec<ChannelKind>,
}

impl ChannelLayout {
    pub fn new(kinds: Vec<ChannelKind>) -> Self {
        Self { kinds }
    }

    /// `n` independent scalar channels.
    pub fn scalar(n: usize) -> Self {
        Self {
            kinds: vec![ChannelKind::Scalar; n],
        }
    }

    pub fn kinds(&self) -> &[ChannelKind] {
        &self.kinds
    }

    pub fn width(&self) -> usize {
        self.kinds.iter().map(|k| k.width()).sum()
    }

    /// Number of frame-invariant features per node: one per group.
    pub fn invariant_width(&self) -> usize {
        self.kinds.len()
    }

    /// Per-group invariants of one node's values: the raw value of scalar
    /// groups and the Euclidean norm of vector groups.
    pub fn invariant_features(&self, row: &[f64], out: &mut Vec<f64>) -> Result<(), GeometryError> {
        let mut off = 0;
        for kind in &self.kinds {
            match kind {
                ChannelKind::Scalar => out.push(row[off]),
                ChannelKind::Vector2 => out.push(row[off].hypot(row[off + 1])),
                ChannelKind::Point2 => {
                    return Err(GeometryError::Layout(
                        "position channels have no frame-invariant feature".into(),
                    ))
                }
            }
            off += kind.width();
        }
        Ok(())
    }
}

impl fmt::Display for ChannelLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.kinds.iter().map(|k| k.name()).collect();
        write!(f, "{}", names.join(","))
    }
}

impl FromStr for ChannelLayout {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::new(Vec::new()));
        }
        let kinds = s
            .split(',')
            .map(|t| match t.trim() {
                "scalar" => Ok(ChannelKind::Scalar),
                "vector2" => Ok(ChannelKind::Vector2),
                "point2" => Ok(ChannelKind::Point2),
                other => Err(GeometryError::Layout(format!("unknown channel kind `{other}`"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self::new(kinds))
    }
}

impl From<ChannelLayout> for String {
    fn from(l: ChannelLayout) -> Self {
        l.to_string()
    }
}

impl TryFrom<String> for ChannelLayout {
    type Error = GeometryError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
