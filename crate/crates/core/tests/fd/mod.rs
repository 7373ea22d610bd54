//! Finite-difference gradient oracle shared by the gradient tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use firesr::model::ops::{conv_forward, upsample2x};
use firesr::model::{build_network, Activation, ChannelConfig, FeatureMaps, NetworkWeights};
use firesr::training::{backward_trace, GradientSet};
use firesr::Scale;

pub struct Case {
    pub net: NetworkWeights,
    pub target: Vec<f64>,
    pub grads: GradientSet,
    /// Input of each conv layer in the unperturbed pass.
    pub conv_inputs: Vec<FeatureMaps>,
    /// ReLU gates (pre-activation > 0) of the unperturbed pass.
    pub gates: Vec<Vec<bool>>,
}

/// Random 8x8 LR input, random HR target and analytic MSE gradients.
pub fn case(scale: Scale) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + scale.factor() as u64);
    let mut net = build_network(scale, ChannelConfig::default(), 5).unwrap();
    // Nonzero biases so their gradients are exercised away from zero.
    for l in net.layers.iter_mut() {
        l.biases
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let x = FeatureMaps {
        channels: 3,
        height: 8,
        width: 8,
        data: (0..3 * 64).map(|_| rng.random_range(0.0..1.0)).collect(),
    };
    let n_hr = 8 * scale.factor();
    let target: Vec<f64> = (0..n_hr * n_hr)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();

    let trace = net.forward_trace(&x).unwrap();
    let out = trace.output();
    let n = target.len() as f64;
    let up = FeatureMaps {
        channels: 1,
        height: out.height,
        width: out.width,
        data: out
            .data
            .iter()
            .zip(&target)
            .map(|(p, t)| 2.0 * (p - t) / n)
            .collect(),
    };
    let (grads, _) = backward_trace(&net, &trace, &up).unwrap();
    let gates = trace.pre_activations[..3]
        .iter()
        .map(|m| m.data.iter().map(|&v| v > 0.0).collect())
        .collect();
    Case {
        net,
        target,
        grads,
        conv_inputs: trace.conv_inputs,
        gates,
    }
}

fn mse(out: &FeatureMaps, t: &[f64]) -> f64 {
    out.data
        .iter()
        .zip(t)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / t.len() as f64
}

/// Layers `first..` applied to that layer's conv input. With `gates`, each
/// ReLU is replaced by the fixed 0/1 mask, which makes the loss quadratic in
/// any single parameter.
fn forward_from(
    net: &NetworkWeights,
    first: usize,
    input: &FeatureMaps,
    gates: Option<&[Vec<bool>]>,
) -> FeatureMaps {
    let mut x = input.clone();
    for (i, layer) in net.layers.iter().enumerate().skip(first) {
        if i > first && net.upsample_positions.contains(&i) {
            x = upsample2x(&x);
        }
        x = conv_forward(layer, &x);
        if layer.activation == Activation::Relu {
            match gates {
                Some(g) => x.data.iter_mut().zip(&g[i]).for_each(|(v, &on)| {
                    if !on {
                        *v = 0.0
                    }
                }),
                None => x.data.iter_mut().for_each(|v| *v = v.max(0.0)),
            }
        }
    }
    x
}

fn param_mut(net: &mut NetworkWeights, layer: usize, i: usize) -> &mut f64 {
    let l = &mut net.layers[layer];
    let nk = l.kernels.len();
    if i < nk {
        &mut l.kernels[i]
    } else {
        &mut l.biases[i - nk]
    }
}

pub struct Mismatch {
    pub layer: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Central difference of every parameter with step `h`, compared at 1e-4
/// relative error with a 1e-6 absolute floor. Returns the number of
/// parameters checked or the first disagreement.
pub fn check_all(c: &mut Case, h: f64, gated: bool) -> Result<usize, Mismatch> {
    let mut checked = 0;
    for li in 0..c.net.layers.len() {
        let nk = c.net.layers[li].kernels.len();
        let nb = c.net.layers[li].biases.len();
        for pi in 0..nk + nb {
            let analytic = if pi < nk {
                c.grads.layers[li].kernels[pi]
            } else {
                c.grads.layers[li].biases[pi - nk]
            };
            let gates = gated.then_some(c.gates.as_slice());
            let loss = |net: &NetworkWeights| {
                mse(&forward_from(net, li, &c.conv_inputs[li], gates), &c.target)
            };
            let orig = *param_mut(&mut c.net, li, pi);
            *param_mut(&mut c.net, li, pi) = orig + h;
            let lp = loss(&c.net);
            *param_mut(&mut c.net, li, pi) = orig - h;
            let lm = loss(&c.net);
            *param_mut(&mut c.net, li, pi) = orig;
            let numeric = (lp - lm) / (2.0 * h);

            let diff = (analytic - numeric).abs();
            if diff > 1e-6 && diff > 1e-4 * analytic.abs().max(numeric.abs()) {
                return Err(Mismatch {
                    layer: li,
                    index: pi,
                    analytic,
                    numeric,
                });
            }
            checked += 1;
        }
    }
    Ok(checked)
}
