//! The FireSRnet network: four same-padded convolutions (9x9, 5x5, 3x3, 1x1)
//! interleaved with bilinear 2x upsampling stages.

mod filters;
pub(crate) mod io;
pub mod ops;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ChannelRole, ChannelStack, Raster};
use crate::scale::Scale;

pub use filters::{export_layer1_filters, FilterExportMode};
pub use io::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC};

pub const KERNEL_SIZES: [usize; 4] = [9, 5, 3, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Channel-major stack of equally sized planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMaps {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_stack(stack: &ChannelStack) -> Self {
        let (width, height) = stack.dims();
        let mut data = Vec::with_capacity(stack.len() * width * height);
        for c in stack.channels() {
            data.extend_from_slice(c.values());
        }
        Self {
            channels: stack.len(),
            height,
            width,
            data,
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`, row-major.
    pub kernels: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn zeros(
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
    ) -> Self {
        Self {
            kernel_size,
            in_channels,
            out_channels,
            kernels: vec![0.0; out_channels * in_channels * kernel_size * kernel_size],
            biases: vec![0.0; out_channels],
            activation,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.kernels.len() + self.biases.len()
    }

    pub fn kernel_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel_size + ky) * self.kernel_size + kx
    }

    fn validate(&self) -> Result<()> {
        let k = self.kernel_size;
        if k.is_multiple_of(2) || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Shape(format!(
                "conv layer {k}x{k} {}->{} is not an odd-kernel layer with channels",
                self.in_channels, self.out_channels
            )));
        }
        if self.kernels.len() != self.out_channels * self.in_channels * k * k
            || self.biases.len() != self.out_channels
        {
            return Err(Error::Shape(format!(
                "conv layer {k}x{k} {}->{} holds {} kernel and {} bias values",
                self.in_channels,
                self.out_channels,
                self.kernels.len(),
                self.biases.len()
            )));
        }
        Ok(())
    }
}

/// Output widths of the first three convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            c1: 16,
            c2: 8,
            c3: 8,
        }
    }
}

impl ChannelConfig {
    pub fn new(c1: usize, c2: usize, c3: usize) -> Self {
        Self { c1, c2, c3 }
    }

    /// `(in, out)` per conv layer for a 3-channel input.
    pub fn layer_channels(&self) -> [(usize, usize); 4] {
        [
            (3, self.c1),
            (self.c1, self.c2),
            (self.c2, self.c3),
            (self.c3, 1),
        ]
    }
}

/// Conv layer indices preceded by a 2x upsample.
pub fn upsample_positions(scale: Scale) -> Vec<usize> {
    (0..scale.stages()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub scale: Scale,
    pub channels: ChannelConfig,
    pub layers: Vec<ConvLayer>,
    pub upsample_positions: Vec<usize>,
    /// Free-form provenance (training seed, epochs, ...), saved with the weights.
    pub metadata: BTreeMap<String, String>,
}

/// All-zero network of the given shape.
pub fn zero_network(scale: Scale, channels: ChannelConfig) -> Result<NetworkWeights> {
    let layers = KERNEL_SIZES
        .iter()
        .zip(channels.layer_channels())
        .enumerate()
        .map(|(i, (&k, (ci, co)))| {
            let act = if i < 3 {
                Activation::Relu
            } else {
                Activation::Linear
            };
            ConvLayer::zeros(k, ci, co, act)
        })
        .collect();
    let net = NetworkWeights {
        scale,
        channels,
        layers,
        upsample_positions: upsample_positions(scale),
        metadata: BTreeMap::new(),
    };
    net.validate()?;
    Ok(net)
}

/// Network with seeded He-normal kernels and zero biases.
pub fn build_network(scale: Scale, channels: ChannelConfig, seed: u64) -> Result<NetworkWeights> {
    let mut net = zero_network(scale, channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut net.layers {
        let fan_in = (layer.kernel_size * layer.kernel_size * layer.in_channels) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        for w in layer.kernels.iter_mut() {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(net)
}

/// Intermediate tensors of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each conv layer (after any upsample).
    pub conv_inputs: Vec<FeatureMaps>,
    /// Pre-activation output of each conv layer.
    pub pre_activations: Vec<FeatureMaps>,
}

impl ForwardTrace {
    /// Unclamped network output.
    pub fn output(&self) -> &FeatureMaps {
        self.pre_activations.last().expect("four layers")
    }
}

impl NetworkWeights {
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::parameter_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != 4 {
            return Err(Error::Shape(format!(
                "expected 4 conv layers, got {}",
                self.layers.len()
            )));
        }
        let expected = self.channels.layer_channels();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.kernel_size != KERNEL_SIZES[i]
                || (layer.in_channels, layer.out_channels) != expected[i]
            {
                return Err(Error::Shape(format!(
                    "layer {i} is {k}x{k} {}->{}, expected {}x{} {}->{}",
                    layer.in_channels,
                    layer.out_channels,
                    KERNEL_SIZES[i],
                    KERNEL_SIZES[i],
                    expected[i].0,
                    expected[i].1,
                    k = layer.kernel_size
                )));
            }
        }
        if self.upsample_positions != upsample_positions(self.scale) {
            return Err(Error::Shape(format!(
                "upsample positions {:?} do not match scale {}",
                self.upsample_positions, self.scale
            )));
        }
        Ok(())
    }

    /// Run every layer, keeping intermediates for backpropagation.
    pub fn forward_trace(&self, input: &FeatureMaps) -> Result<ForwardTrace> {
        if input.channels != 3 {
            return Err(Error::Shape(format!(
                "network expects 3 input channels, got {}",
                input.channels
            )));
        }
        if input.width == 0 || input.height == 0 {
            return Err(Error::Shape("empty network input".into()));
        }
        let mut conv_inputs = Vec::with_capacity(4);
        let mut pre_activations = Vec::with_capacity(4);
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if self.upsample_positions.contains(&i) {
                x = ops::upsample2x(&x);
            }
            let pre = ops::conv_forward(layer, &x);
            let mut next = pre.clone();
            if layer.activation == Activation::Relu {
                ops::relu_in_place(&mut next);
            }
            conv_inputs.push(x);
            pre_activations.push(pre);
            x = next;
        }
        Ok(ForwardTrace {
            conv_inputs,
            pre_activations,
        })
    }

    /// Unclamped single-channel output for a raw feature-map input.
    pub fn forward_maps(&self, input: &FeatureMaps) -> Result<FeatureMaps> {
        let mut x = input.clone();
        if input.channels != 3 {
            return Err(Error::Shape(format!(
                "network expects 3 input channels, got {}",
                input.channels
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if self.upsample_positions.contains(&i) {
                x = ops::upsample2x(&x);
            }
            x = ops::conv_forward(layer, &x);
            if layer.activation == Activation::Relu {
                ops::relu_in_place(&mut x);
            }
        }
        Ok(x)
    }

    /// Super-resolved fire map for an LR stack in (fire, temp_dev, burnable)
    /// order, clamped at 0.
    pub fn forward(&self, input: &ChannelStack) -> Result<Raster> {
        if input.roles() != ChannelRole::NETWORK_ORDER {
            return Err(Error::Shape(format!(
                "network input roles {:?} are not (fire, temp_dev, burnable)",
                input.roles()
            )));
        }
        let out = self.forward_maps(&FeatureMaps::from_stack(input))?;
        let f = self.scale.factor();
        let geo = input.geo().scaled(1.0 / f as f64);
        let values = out.data.into_iter().map(|v| v.max(0.0)).collect();
        Raster::new(out.width, out.height, values, geo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GeoTransform;

    fn stack(w: usize, h: usize, f: impl Fn(usize, usize, usize) -> f64) -> ChannelStack {
        let ch = |c: usize| Raster::from_fn(w, h, GeoTransform::unit(), |x, y| f(c, x, y)).unwrap();
        ChannelStack::fire_temp_burnable(ch(0), ch(1), ch(2)).unwrap()
    }

    #[test]
    fn default_parameter_count() {
        for s in Scale::ALL {
            let net = build_network(s, ChannelConfig::default(), 0).unwrap();
            assert_eq!(
                net.parameter_count(),
                9 * 9 * 3 * 16 + 16 + 5 * 5 * 16 * 8 + 8 + 3 * 3 * 8 * 8 + 8 + 8 + 1
            );
            assert_eq!(net.upsample_positions.len(), s.stages());
        }
    }

    #[test]
    fn zero_net_gives_zero_output() {
        let net = zero_network(Scale::X4, ChannelConfig::default()).unwrap();
        let out = net.forward(&stack(16, 16, |_, _, _| 0.0)).unwrap();
        assert_eq!(out.dims(), (64, 64));
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_geo_refines_pixel_size() {
        let net = build_network(Scale::X2, ChannelConfig::default(), 1).unwrap();
        let ch = Raster::filled(4, 3, 0.1, GeoTransform::new(-120.0, 40.0, 0.4).unwrap()).unwrap();
        let s = ChannelStack::fire_temp_burnable(ch.clone(), ch.clone(), ch).unwrap();
        let out = net.forward(&s).unwrap();
        assert_eq!(out.dims(), (8, 6));
        assert_eq!(out.geo(), GeoTransform::new(-120.0, 40.0, 0.2).unwrap());
    }

    #[test]
    fn wrong_role_order_rejected() {
        let net = build_network(Scale::X2, ChannelConfig::default(), 1).unwrap();
        let r = Raster::filled(4, 4, 0.0, GeoTransform::unit()).unwrap();
        let s = ChannelStack::new(
            vec![r.clone(), r.clone(), r],
            vec![
                ChannelRole::TempDev,
                ChannelRole::Fire,
                ChannelRole::Burnable,
            ],
        )
        .unwrap();
        assert!(net.forward(&s).is_err());
    }

    #[test]
    fn hand_set_identity_net() {
        // Center taps only: conv9 copies fire to channel 0, later layers pass
        // channel 0 through, conv1 scales by 2 and adds 0.25. Each 2x upsample
        // of a single pixel is constant, so a 1x1 input maps to a constant
        // 4x4 output of 2 * v + 0.25.
        let mut net = zero_network(Scale::X4, ChannelConfig::default()).unwrap();
        for layer in net.layers.iter_mut() {
            let c = layer.kernel_size / 2;
            let idx = layer.kernel_index(0, 0, c, c);
            layer.kernels[idx] = 1.0;
        }
        net.layers[3].kernels[0] = 2.0;
        net.layers[3].biases[0] = 0.25;
        let out = net
            .forward(&stack(1, 1, |c, _, _| [0.3, -0.7, 0.9][c]))
            .unwrap();
        assert_eq!(out.dims(), (4, 4));
        for &v in out.values() {
            assert!((v - 0.85).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn nonnegative_weights_and_inputs_give_nonnegative_raw_output() {
        let mut net = build_network(Scale::X8, ChannelConfig::default(), 3).unwrap();
        for l in net.layers.iter_mut() {
            l.kernels.iter_mut().for_each(|w| *w = w.abs());
        }
        let x = FeatureMaps::from_stack(&stack(5, 4, |c, x, y| ((c + x * y) % 4) as f64 / 4.0));
        let out = net.forward_maps(&x).unwrap();
        assert!(out.data.iter().all(|&v| v >= 0.0));
        assert_eq!((out.width, out.height), (40, 32));
    }

    #[test]
    fn forward_is_deterministic() {
        let net = build_network(Scale::X4, ChannelConfig::default(), 9).unwrap();
        let s = stack(6, 5, |c, x, y| ((c * 7 + x * 3 + y) % 5) as f64 / 5.0);
        assert_eq!(net.forward(&s).unwrap(), net.forward(&s).unwrap());
        let trace = net.forward_trace(&FeatureMaps::from_stack(&s)).unwrap();
        assert_eq!(
            trace.output(),
            &net.forward_maps(&FeatureMaps::from_stack(&s)).unwrap()
        );
    }
}
