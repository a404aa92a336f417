//! Closed-form parameter and model-size accounting.

use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::network::{checkpoint, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerParams {
    pub layer: &'static str,
    pub trainable: usize,
    /// Serialized non-trainable state (batch-norm running statistics).
    pub buffers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamTable {
    pub layers: Vec<LayerParams>,
    pub total: usize,
    pub buffers: usize,
}

impl ParamTable {
    /// Total in millions at two decimals, e.g. `"5.41"`.
    pub fn millions(&self) -> String {
        format!("{:.2}", self.total as f64 / 1e6)
    }
}

impl fmt::Display for ParamTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>12} {:>8}", "layer", "params", "buffers")?;
        for row in &self.layers {
            writeln!(
                f,
                "{:<8} {:>12} {:>8}",
                row.layer, row.trainable, row.buffers
            )?;
        }
        writeln!(f, "{:<8} {:>12} {:>8}", "total", self.total, self.buffers)?;
        write!(f, "Params (M): {}", self.millions())
    }
}

pub fn count_parameters(spec: &NetworkSpec) -> Result<ParamTable> {
    spec.validate()?;
    let k2 = spec.kernel * spec.kernel;
    let conv = |out: usize, inp: usize| out * inp * k2 + out;
    let dense = |out: usize, inp: usize| out * inp + out;
    let flat = spec.flatten_len()?;
    let (c1, c2) = (spec.conv1_filters, spec.conv2_filters);
    let row = |layer, trainable, buffers| LayerParams {
        layer,
        trainable,
        buffers,
    };
    let layers = vec![
        row("conv1", conv(c1, spec.input_channels), 0),
        row("bn1", 2 * c1, 2 * c1),
        row("conv2", conv(c2, c1), 0),
        row("bn2", 2 * c2, 2 * c2),
        row("fc1", dense(spec.fc1, flat), 0),
        row("fc2", dense(spec.fc2, spec.fc1), 0),
        row("fc3", dense(spec.n_classes, spec.fc2), 0),
    ];
    Ok(ParamTable {
        total: layers.iter().map(|r| r.trainable).sum(),
        buffers: layers.iter().map(|r| r.buffers).sum(),
        layers,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelSize {
    /// f32 payload: parameters plus batch-norm buffers.
    pub payload_bytes: usize,
    /// Magic, length prefix and JSON header of a freshly built checkpoint.
    pub header_bytes: usize,
    pub total_bytes: usize,
}

impl ModelSize {
    /// Decimal megabytes, two places.
    pub fn megabytes(&self) -> String {
        format!("{:.2}", self.total_bytes as f64 / 1e6)
    }
}

pub fn model_size(spec: &NetworkSpec) -> Result<ModelSize> {
    let table = count_parameters(spec)?;
    let payload_bytes = 4 * (table.total + table.buffers);
    let header_bytes = checkpoint::header_size(spec)?;
    Ok(ModelSize {
        payload_bytes,
        header_bytes,
        total_bytes: payload_bytes + header_bytes,
    })
}

pub fn model_size_bytes(spec: &NetworkSpec) -> Result<usize> {
    Ok(model_size(spec)?.total_bytes)
}
