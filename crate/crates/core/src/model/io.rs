//! `FSW1` weights files: JSON header followed by little-endian f32 values,
//! per layer kernels then biases, in layer order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, ChannelConfig, ConvLayer, NetworkWeights};
use crate::container;
use crate::error::{Error, Result};
use crate::scale::Scale;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FSW1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LayerShape {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct NetworkHeader {
    pub scale: Scale,
    pub channels: ChannelConfig,
    pub layers: Vec<LayerShape>,
    pub upsample_positions: Vec<usize>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl NetworkHeader {
    pub(crate) fn of(net: &NetworkWeights) -> Self {
        Self {
            scale: net.scale,
            channels: net.channels,
            layers: net
                .layers
                .iter()
                .map(|l| LayerShape {
                    kernel_size: l.kernel_size,
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    activation: l.activation,
                })
                .collect(),
            upsample_positions: net.upsample_positions.clone(),
            metadata: net.metadata.clone(),
        }
    }

    pub(crate) fn value_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_channels * (l.in_channels * l.kernel_size * l.kernel_size + 1))
            .sum()
    }

    /// Rebuild the network from a flat value list in payload order.
    pub(crate) fn assemble(self, values: &[f64], what: &str) -> Result<NetworkWeights> {
        if values.len() != self.value_count() {
            return Err(Error::Shape(format!(
                "{what}: header layers need {} values, payload holds {}",
                self.value_count(),
                values.len()
            )));
        }
        let mut rest = values;
        let mut layers = Vec::with_capacity(self.layers.len());
        for s in &self.layers {
            let nk = s.out_channels * s.in_channels * s.kernel_size * s.kernel_size;
            let (k, tail) = rest.split_at(nk);
            let (b, tail) = tail.split_at(s.out_channels);
            rest = tail;
            layers.push(ConvLayer {
                kernel_size: s.kernel_size,
                in_channels: s.in_channels,
                out_channels: s.out_channels,
                kernels: k.to_vec(),
                biases: b.to_vec(),
                activation: s.activation,
            });
        }
        let net = NetworkWeights {
            scale: self.scale,
            channels: self.channels,
            layers,
            upsample_positions: self.upsample_positions,
            metadata: self.metadata,
        };
        net.validate()
            .map_err(|e| Error::Shape(format!("{what}: {e}")))?;
        Ok(net)
    }
}

/// Parameters flattened in payload order.
pub(crate) fn flatten(net: &NetworkWeights) -> Vec<f64> {
    let mut out = Vec::with_capacity(net.parameter_count());
    for l in &net.layers {
        out.extend_from_slice(&l.kernels);
        out.extend_from_slice(&l.biases);
    }
    out
}

pub fn encode_weights(net: &NetworkWeights) -> Result<Vec<u8>> {
    net.validate()?;
    let header = serde_json::to_vec(&NetworkHeader::of(net))?;
    let values = flatten(net);
    let mut out = container::join(WEIGHTS_MAGIC, &header, 4 * values.len());
    container::put_f32s(&mut out, &values);
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<NetworkWeights> {
    let (header, payload) = container::split(bytes, WEIGHTS_MAGIC, "weights")?;
    let header: NetworkHeader = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("weights header: {e}")))?;
    let expected = 4 * header.value_count();
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "weights: header layers need {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    header.assemble(&container::get_f32s(payload), "weights")
}

/// Write weights rounded to single precision.
pub fn save_weights(net: &NetworkWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}
