//! Layer kernels on channel-major feature maps.
//!
//! Convolutions are "same"-padded cross-correlations lowered to a matrix
//! product over an im2col buffer: rows are `(in_channel, ky, kx)`, columns
//! are output pixels.

use crate::raster::{bilinear_plane, bilinear_plane_adjoint};

use super::{ConvLayer, FeatureMaps};

/// `c += a * b` for row-major `a: m x k`, `b: k x n`, `c: m x n` given as
/// (pointer, row stride, col stride) views.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(m == 0 || k == 0 || n == 0 || (a.len() > (m - 1) * rsa + (k - 1) * csa));
    assert!(m == 0 || k == 0 || n == 0 || (b.len() > (k - 1) * rsb + (n - 1) * csb));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Valid output range `[lo, hi)` along an axis of length `n` for tap offset
/// `d` (input index = output index + d).
#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).clamp(0, n as isize) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

fn im2col(input: &FeatureMaps, k: usize) -> Vec<f64> {
    let (h, w) = (input.height, input.width);
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut col = vec![0.0; input.channels * k * k * hw];
    for c in 0..input.channels {
        let plane = input.plane(c);
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = valid_range(h, dy);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = valid_range(w, dx);
                if x0 == x1 {
                    continue;
                }
                let row = &mut col[((c * k + ky) * k + kx) * hw..][..hw];
                for y in y0..y1 {
                    let src_y = (y as isize + dy) as usize;
                    let src = &plane[src_y * w + (x0 as isize + dx) as usize..][..x1 - x0];
                    row[y * w + x0..y * w + x1].copy_from_slice(src);
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], channels: usize, h: usize, w: usize, k: usize) -> FeatureMaps {
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut out = FeatureMaps::zeros(channels, h, w);
    for c in 0..channels {
        let plane = out.plane_mut(c);
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = valid_range(h, dy);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = valid_range(w, dx);
                if x0 == x1 {
                    continue;
                }
                let row = &col[((c * k + ky) * k + kx) * hw..][..hw];
                for y in y0..y1 {
                    let dst_y = (y as isize + dy) as usize;
                    let dst = &mut plane[dst_y * w + (x0 as isize + dx) as usize..][..x1 - x0];
                    for (d, s) in dst.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// Pre-activation output of a same-padded convolution.
pub fn conv_forward(layer: &ConvLayer, input: &FeatureMaps) -> FeatureMaps {
    debug_assert_eq!(input.channels, layer.in_channels);
    let hw = input.height * input.width;
    let kk = layer.in_channels * layer.kernel_size * layer.kernel_size;
    let mut out = FeatureMaps::zeros(layer.out_channels, input.height, input.width);
    for (o, &b) in layer.biases.iter().enumerate() {
        out.plane_mut(o).fill(b);
    }
    if layer.kernel_size == 1 {
        gemm_acc(
            layer.out_channels,
            kk,
            hw,
            &layer.kernels,
            (kk, 1),
            &input.data,
            (hw, 1),
            &mut out.data,
            1.0,
        );
    } else {
        let col = im2col(input, layer.kernel_size);
        gemm_acc(
            layer.out_channels,
            kk,
            hw,
            &layer.kernels,
            (kk, 1),
            &col,
            (hw, 1),
            &mut out.data,
            1.0,
        );
    }
    out
}

/// Gradients of a convolution given its input and the gradient w.r.t. its
/// pre-activation output: `(d kernels, d biases, d input)`.
pub fn conv_backward(
    layer: &ConvLayer,
    input: &FeatureMaps,
    grad_out: &FeatureMaps,
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Option<FeatureMaps>) {
    let hw = input.height * input.width;
    let k = layer.kernel_size;
    let kk = layer.in_channels * k * k;
    let oc = layer.out_channels;

    let grad_b: Vec<f64> = (0..oc).map(|o| grad_out.plane(o).iter().sum()).collect();

    let owned_col;
    let col: &[f64] = if k == 1 {
        &input.data
    } else {
        owned_col = im2col(input, k);
        &owned_col
    };
    let mut grad_w = vec![0.0; oc * kk];
    // dW = G (oc x hw) * col^T (hw x kk)
    gemm_acc(
        oc,
        hw,
        kk,
        &grad_out.data,
        (hw, 1),
        col,
        (1, hw),
        &mut grad_w,
        0.0,
    );

    let grad_in = need_input_grad.then(|| {
        // dcol = W^T (kk x oc) * G (oc x hw)
        let mut grad_col = vec![0.0; kk * hw];
        gemm_acc(
            kk,
            oc,
            hw,
            &layer.kernels,
            (1, kk),
            &grad_out.data,
            (hw, 1),
            &mut grad_col,
            0.0,
        );
        if k == 1 {
            FeatureMaps {
                channels: layer.in_channels,
                height: input.height,
                width: input.width,
                data: grad_col,
            }
        } else {
            col2im(&grad_col, layer.in_channels, input.height, input.width, k)
        }
    });
    (grad_w, grad_b, grad_in)
}

/// Bilinear 2x upsampling of every channel.
pub fn upsample2x(input: &FeatureMaps) -> FeatureMaps {
    let (h, w) = (input.height, input.width);
    let mut data = Vec::with_capacity(input.data.len() * 4);
    for c in 0..input.channels {
        data.extend(bilinear_plane(input.plane(c), w, h, 2 * w, 2 * h));
    }
    FeatureMaps {
        channels: input.channels,
        height: 2 * h,
        width: 2 * w,
        data,
    }
}

/// Adjoint of [`upsample2x`].
pub fn upsample2x_backward(grad_out: &FeatureMaps) -> FeatureMaps {
    let (h, w) = (grad_out.height / 2, grad_out.width / 2);
    let mut data = Vec::with_capacity(grad_out.data.len() / 4);
    for c in 0..grad_out.channels {
        data.extend(bilinear_plane_adjoint(
            grad_out.plane(c),
            w,
            h,
            2 * w,
            2 * h,
        ));
    }
    FeatureMaps {
        channels: grad_out.channels,
        height: h,
        width: w,
        data,
    }
}

pub(crate) fn relu_in_place(x: &mut FeatureMaps) {
    for v in x.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}
