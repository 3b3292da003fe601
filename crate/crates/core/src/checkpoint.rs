//! Plain-text model checkpoints.
//!
//! ```text
//! gahne-checkpoint 1
//! config <key>=<value>          (model configuration, one line per key)
//! meta <key>=<value>            (free-form run settings)
//! channels <T>
//! classes <C>
//! input_dim <D>
//! param <name> <kind> <rows> <cols>
//! <row-major values, one matrix row per line>
//! end
//! ```
//!
//! Values are written with 17 significant digits, which round-trips `f64`
//! exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{Aggregator, ModelConfig, ModelParams, Param, ParamKind};

const MAGIC: &str = "gahne-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// Settings needed to rebuild the run's inputs (feature mode, split, seed).
    pub meta: Vec<(String, String)>,
    pub num_channels: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub params: ModelParams,
}

fn kind_name(k: ParamKind) -> &'static str {
    match k {
        ParamKind::Weight => "weight",
        ParamKind::Bias => "bias",
        ParamKind::AttentionVector => "attention",
    }
}

fn parse_kind(s: &str) -> Option<ParamKind> {
    match s {
        "weight" => Some(ParamKind::Weight),
        "bias" => Some(ParamKind::Bias),
        "attention" => Some(ParamKind::AttentionVector),
        _ => None,
    }
}

/// `key=value` pairs describing a model configuration.
pub fn model_config_pairs(c: &ModelConfig) -> Vec<(String, String)> {
    let dims: Vec<String> = c.hidden_dims.iter().map(ToString::to_string).collect();
    [
        ("num_layers", c.num_layers.to_string()),
        ("conv_order", c.conv_order.to_string()),
        ("hidden_dims", dims.join(",")),
        ("aggregator", c.aggregator.to_string()),
        ("attention_dim", c.attention_dim.to_string()),
        ("fusion", c.fusion_enabled.to_string()),
        ("channels", c.channels_enabled.to_string()),
        ("dropout", format!("{:?}", c.dropout_rate)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn model_config_from_pairs(pairs: &[(String, String)]) -> Result<ModelConfig> {
    let get = |key: &str| {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing config key {key}")))
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::Checkpoint(format!("bad value {v:?} for {key}")))
    }
    let hidden_dims = get("hidden_dims")?
        .split(',')
        .map(|d| num("hidden_dims", d))
        .collect::<Result<Vec<usize>>>()?;
    Ok(ModelConfig {
        num_layers: num("num_layers", get("num_layers")?)?,
        conv_order: num("conv_order", get("conv_order")?)?,
        hidden_dims,
        aggregator: get("aggregator")?
            .parse::<Aggregator>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?,
        attention_dim: num("attention_dim", get("attention_dim")?)?,
        fusion_enabled: num("fusion", get("fusion")?)?,
        channels_enabled: num("channels", get("channels")?)?,
        dropout_rate: num("dropout", get("dropout")?)?,
    })
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        for (k, v) in model_config_pairs(&self.model) {
            let _ = writeln!(s, "config {k}={v}");
        }
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k}={v}");
        }
        let _ = writeln!(s, "channels {}", self.num_channels);
        let _ = writeln!(s, "classes {}", self.num_classes);
        let _ = writeln!(s, "input_dim {}", self.input_dim);
        for p in self.params.iter() {
            let (rows, cols) = p.value.shape();
            let _ = writeln!(s, "param {} {} {rows} {cols}", p.name, kind_name(p.kind));
            for r in 0..rows {
                let line: Vec<String> = p.value.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(bad(1, "not a checkpoint (missing header)")),
        }
        let mut config = Vec::new();
        let mut meta = Vec::new();
        let (mut channels, mut classes, mut input_dim) = (None, None, None);
        let mut params = Vec::new();
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            let kv = |rest: &str| {
                rest.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| bad(n, "expected key=value"))
            };
            let count = |rest: &str| rest.trim().parse::<usize>().map_err(|_| bad(n, "expected a count"));
            match tag {
                "config" => config.push(kv(rest)?),
                "meta" => meta.push(kv(rest)?),
                "channels" => channels = Some(count(rest)?),
                "classes" => classes = Some(count(rest)?),
                "input_dim" => input_dim = Some(count(rest)?),
                "param" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 {
                        return Err(bad(n, "expected: param <name> <kind> <rows> <cols>"));
                    }
                    let kind = parse_kind(f[1]).ok_or_else(|| bad(n, "unknown parameter kind"))?;
                    let rows = count(f[2])?;
                    let cols = count(f[3])?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rn, row) = lines.next().ok_or_else(|| bad(n, "truncated parameter"))?;
                        let before = data.len();
                        for tok in row.split_whitespace() {
                            data.push(tok.parse::<f64>().map_err(|_| bad(rn, "bad number"))?);
                        }
                        if data.len() - before != cols {
                            return Err(bad(rn, "wrong number of values in row"));
                        }
                    }
                    params.push(Param {
                        name: f[0].to_string(),
                        kind,
                        value: DenseMatrix::new(rows, cols, data)?,
                    });
                }
                "end" => {
                    ended = true;
                    break;
                }
                _ => return Err(bad(n, "unexpected line")),
            }
        }
        if !ended {
            return Err(Error::Checkpoint("truncated checkpoint (no end marker)".into()));
        }
        let missing = |what: &str| Error::Checkpoint(format!("missing {what}"));
        Ok(Self {
            model: model_config_from_pairs(&config)?,
            meta,
            num_channels: channels.ok_or_else(|| missing("channels"))?,
            num_classes: classes.ok_or_else(|| missing("classes"))?,
            input_dim: input_dim.ok_or_else(|| missing("input_dim"))?,
            params: ModelParams::new(params),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
