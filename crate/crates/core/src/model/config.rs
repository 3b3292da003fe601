use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How per-relation channel outputs are merged after each layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    /// Node-independent softmax weights over channels.
    Attention,
    /// Per-node, per-dimension sigmoid gates.
    Gated,
    /// Shared affine + ReLU, then elementwise mean over channels.
    Pooling,
    /// Plain elementwise mean.
    Mean,
    /// Only channel `t` is used.
    Single(usize),
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Self::Attention),
            "gated" => Ok(Self::Gated),
            "pooling" => Ok(Self::Pooling),
            "mean" => Ok(Self::Mean),
            other => other
                .strip_prefix("single:")
                .and_then(|t| t.parse().ok())
                .map(Self::Single)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "unknown aggregator {other:?} (attention, gated, pooling, mean, single:<t>)"
                    ))
                }),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Attention => f.write_str("attention"),
            Self::Gated => f.write_str("gated"),
            Self::Pooling => f.write_str("pooling"),
            Self::Mean => f.write_str("mean"),
            Self::Single(t) => write!(f, "single:{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    /// K in the K-order convolution.
    pub conv_order: usize,
    /// Output width of each layer; length `num_layers`.
    pub hidden_dims: Vec<usize>,
    pub aggregator: Aggregator,
    pub attention_dim: usize,
    pub fusion_enabled: bool,
    /// When false the relation channels are replaced by a second whole-graph branch.
    pub channels_enabled: bool,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            conv_order: 1,
            hidden_dims: vec![64; 2],
            aggregator: Aggregator::Attention,
            attention_dim: 128,
            fusion_enabled: true,
            channels_enabled: true,
            dropout_rate: 0.5,
        }
    }
}

impl ModelConfig {
    /// All layers `dim` wide.
    pub fn with_uniform_dims(mut self, num_layers: usize, dim: usize) -> Self {
        self.num_layers = num_layers;
        self.hidden_dims = vec![dim; num_layers];
        self
    }

    pub fn output_dim(&self) -> usize {
        *self.hidden_dims.last().expect("validated config has layers")
    }

    pub fn validate(&self, num_channels: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_layers == 0 || self.conv_order == 0 {
            return bad("num_layers and conv_order must be at least 1".into());
        }
        if self.hidden_dims.len() != self.num_layers {
            return bad(format!(
                "{} hidden dims for {} layers",
                self.hidden_dims.len(),
                self.num_layers
            ));
        }
        if self.hidden_dims.contains(&0) || self.attention_dim == 0 {
            return bad("all dimensions must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.channels_enabled {
            if num_channels == 0 {
                return bad("graph has no edge types to build channels from".into());
            }
            if let Aggregator::Single(t) = self.aggregator {
                if t >= num_channels {
                    return bad(format!("single:{t} but the graph has {num_channels} channels"));
                }
            }
        }
        Ok(())
    }

    /// Channels whose convolutions are computed.
    pub fn active_channels(&self, num_channels: usize) -> Vec<usize> {
        match (self.channels_enabled, self.aggregator) {
            (false, _) => vec![],
            (true, Aggregator::Single(t)) => vec![t],
            (true, _) => (0..num_channels).collect(),
        }
    }
}
