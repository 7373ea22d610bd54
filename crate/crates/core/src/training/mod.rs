//! Reverse-mode gradients, the Adam optimizer and the training loop.

mod adam;
mod checkpoint;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ops, Activation, FeatureMaps, ForwardTrace, NetworkWeights};
use crate::raster::{ChannelStack, Raster};

pub use adam::AdamState;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use trainer::{
    train, train_samples, write_log_csv, EpochRecord, TrainOutcome, TrainState, Trainer,
};

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn mse_loss(pred: &Raster, target: &Raster) -> Result<(f64, Raster)> {
    if pred.dims() != target.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let (loss, grad) = mse_slices(pred.values(), target.values());
    Ok((
        loss,
        Raster::new(pred.width(), pred.height(), grad, pred.geo())?,
    ))
}

pub(crate) fn mse_slices(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    (sum / n, grad)
}

/// MSE of the output clamped at 0, as used at inference. The clamp passes
/// gradients straight through, so the gradient is `2 (max(pred, 0) - target) / N`:
/// background pixels already at or below 0 get none, but a fire pixel with a
/// negative prediction is still pulled up.
pub(crate) fn clamped_mse_slices(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p.max(0.0) - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    (sum / n, grad)
}

/// Which output the training loss is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTarget {
    /// The linear output of the last layer.
    Raw,
    /// The output clamped at 0 (see [`TrainConfig::loss_on`]).
    #[default]
    Clamped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub kernels: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(net: &NetworkWeights) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    kernels: vec![0.0; l.kernels.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.kernels
                .iter_mut()
                .zip(&b.kernels)
                .for_each(|(x, y)| *x += y);
            a.biases
                .iter_mut()
                .zip(&b.biases)
                .for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, f: f64) {
        for l in &mut self.layers {
            l.kernels.iter_mut().for_each(|x| *x *= f);
            l.biases.iter_mut().for_each(|x| *x *= f);
        }
    }

    /// All values in the network's flat parameter order.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.kernels.iter().chain(&l.biases))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Backpropagate `upstream` (gradient w.r.t. the unclamped output) through a
/// recorded forward pass. Returns parameter gradients and the gradient with
/// respect to the network input.
pub fn backward_trace(
    net: &NetworkWeights,
    trace: &ForwardTrace,
    upstream: &FeatureMaps,
) -> Result<(GradientSet, FeatureMaps)> {
    let out = trace.output();
    if (upstream.channels, upstream.height, upstream.width) != (out.channels, out.height, out.width)
    {
        return Err(Error::Shape(format!(
            "upstream gradient {}x{}x{} does not match output {}x{}x{}",
            upstream.channels, upstream.height, upstream.width, out.channels, out.height, out.width
        )));
    }
    let mut grads = Vec::with_capacity(net.layers.len());
    let mut g = upstream.clone();
    for (i, layer) in net.layers.iter().enumerate().rev() {
        if layer.activation == Activation::Relu {
            for (gv, &p) in g.data.iter_mut().zip(&trace.pre_activations[i].data) {
                if p <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        let (gk, gb, gx) = ops::conv_backward(layer, &trace.conv_inputs[i], &g, true);
        grads.push(LayerGradient {
            kernels: gk,
            biases: gb,
        });
        g = gx.expect("input gradient requested");
        if net.upsample_positions.contains(&i) {
            g = ops::upsample2x_backward(&g);
        }
    }
    grads.reverse();
    Ok((GradientSet { layers: grads }, g))
}

/// Gradients of `sum(upstream * net(input))` with respect to every parameter
/// and the input channels.
pub fn backward(
    net: &NetworkWeights,
    input: &ChannelStack,
    upstream: &Raster,
) -> Result<(GradientSet, FeatureMaps)> {
    let x = FeatureMaps::from_stack(input);
    let trace = net.forward_trace(&x)?;
    let up = FeatureMaps {
        channels: 1,
        height: upstream.height(),
        width: upstream.width(),
        data: upstream.values().to_vec(),
    };
    backward_trace(net, &trace, &up)
}

/// Loss and parameter gradients of one (input, target) pair.
pub(crate) fn sample_gradient(
    net: &NetworkWeights,
    input: &FeatureMaps,
    target: &[f64],
    loss_on: LossTarget,
) -> Result<(f64, GradientSet)> {
    let trace = net.forward_trace(input)?;
    let out = trace.output();
    if out.data.len() != target.len() {
        return Err(Error::Shape(format!(
            "network output has {} pixels, target has {}",
            out.data.len(),
            target.len()
        )));
    }
    let (loss, grad) = match loss_on {
        LossTarget::Raw => mse_slices(&out.data, target),
        LossTarget::Clamped => clamped_mse_slices(&out.data, target),
    };
    let up = FeatureMaps {
        channels: 1,
        height: out.height,
        width: out.width,
        data: grad,
    };
    let (g, _) = backward_trace(net, &trace, &up)?;
    Ok((loss, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Side of the random HR crops; `None` trains on full images.
    pub crop_size: Option<usize>,
    pub seed: u64,
    pub channels: crate::model::ChannelConfig,
    /// Output the loss is computed on. With [`LossTarget::Clamped`] the
    /// network may push background pixels below 0 without penalty, which is
    /// what the clamped inference output sees.
    pub loss_on: LossTarget,
    /// Record wall-clock seconds per epoch in the log (0 when off).
    pub log_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            max_epochs: 500,
            patience: 20,
            crop_size: Some(128),
            seed: 0,
            channels: Default::default(),
            loss_on: LossTarget::Clamped,
            log_timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, scale: crate::Scale) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("moment decays must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be >= 1".into());
        }
        if let Some(c) = self.crop_size {
            if c == 0 || c % scale.factor() != 0 {
                return bad(format!(
                    "crop_size {c} must be a positive multiple of {}",
                    scale.factor()
                ));
            }
        }
        let ch = self.channels;
        if ch.c1 == 0 || ch.c2 == 0 || ch.c3 == 0 {
            return bad("channel counts must be >= 1".into());
        }
        Ok(())
    }
}
