//! Resampling kernels.
//!
//! Both interpolators map output pixel centers onto the source grid with
//! `x_in = (x_out + 0.5) * (w_in / w_out) - 0.5`, clamp the coordinate to
//! `[0, w_in - 1]` and replicate edge pixels for taps that fall outside.

use serde::{Deserialize, Serialize};

use super::Raster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct LinearTap {
    lo: usize,
    hi: usize,
    t: f64,
}

fn source_coord(o: usize, n_in: usize, n_out: usize) -> f64 {
    let scale = n_in as f64 / n_out as f64;
    ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64)
}

fn linear_taps(n_in: usize, n_out: usize) -> Vec<LinearTap> {
    (0..n_out)
        .map(|o| {
            let x = source_coord(o, n_in, n_out);
            let lo = (x.floor() as usize).min(n_in - 1);
            LinearTap {
                lo,
                hi: (lo + 1).min(n_in - 1),
                t: x - lo as f64,
            }
        })
        .collect()
}

/// `a + (b - a) t`, kept inside `[min(a, b), max(a, b)]`. Written in this
/// form so that equal endpoints come back bit-exact.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = a + (b - a) * t;
    if a <= b {
        v.clamp(a, b)
    } else {
        v.clamp(b, a)
    }
}

/// Bilinear resampling of a bare `w x h` plane to `ow x oh`.
pub(crate) fn bilinear_plane(src: &[f64], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f64> {
    debug_assert_eq!(src.len(), w * h);
    let xt = linear_taps(w, ow);
    let yt = linear_taps(h, oh);

    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * ow..(y + 1) * ow];
        for (o, tap) in out.iter_mut().zip(&xt) {
            *o = lerp(row[tap.lo], row[tap.hi], tap.t);
        }
    }

    let mut out = vec![0.0; oh * ow];
    for (oy, tap) in yt.iter().enumerate() {
        let lo = &tmp[tap.lo * ow..(tap.lo + 1) * ow];
        let hi = &tmp[tap.hi * ow..(tap.hi + 1) * ow];
        let dst = &mut out[oy * ow..(oy + 1) * ow];
        for ((d, &a), &b) in dst.iter_mut().zip(lo).zip(hi) {
            *d = lerp(a, b, tap.t);
        }
    }
    out
}

/// Transpose of [`bilinear_plane`]: scatters an output-space gradient back
/// onto the `w x h` source plane.
pub(crate) fn bilinear_plane_adjoint(
    grad_out: &[f64],
    w: usize,
    h: usize,
    ow: usize,
    oh: usize,
) -> Vec<f64> {
    debug_assert_eq!(grad_out.len(), ow * oh);
    let xt = linear_taps(w, ow);
    let yt = linear_taps(h, oh);

    let mut tmp = vec![0.0; h * ow];
    for (oy, tap) in yt.iter().enumerate() {
        let g = &grad_out[oy * ow..(oy + 1) * ow];
        for (ox, &gv) in g.iter().enumerate() {
            tmp[tap.lo * ow + ox] += (1.0 - tap.t) * gv;
            tmp[tap.hi * ow + ox] += tap.t * gv;
        }
    }

    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let g = &tmp[y * ow..(y + 1) * ow];
        let dst = &mut out[y * w..(y + 1) * w];
        for (gv, tap) in g.iter().zip(&xt) {
            dst[tap.lo] += (1.0 - tap.t) * gv;
            dst[tap.hi] += tap.t * gv;
        }
    }
    out
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct CubicTap {
    idx: [usize; 4],
    w: [f64; 4],
}

fn cubic_taps(n_in: usize, n_out: usize) -> Vec<CubicTap> {
    let last = n_in as isize - 1;
    (0..n_out)
        .map(|o| {
            let x = source_coord(o, n_in, n_out);
            let base = x.floor();
            let t = x - base;
            let base = base as isize;
            let mut idx = [0; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let offset = k as isize - 1;
                idx[k] = (base + offset).clamp(0, last) as usize;
                w[k] = keys_weight(t - offset as f64);
            }
            CubicTap { idx, w }
        })
        .collect()
}

fn prepare(src: &Raster, out_w: usize, out_h: usize, what: &str) -> Result<Raster> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "{what}: output dims must be at least 1x1, got {out_w}x{out_h}"
        )));
    }
    let (filled, replaced) = src.fill_nodata();
    if replaced > 0 {
        log::warn!("{what}: replaced {replaced} nodata pixels with 0");
    }
    filled.ensure_finite(what)?;
    Ok(filled)
}

/// Bilinear resampling to `out_width x out_height`.
pub fn bilinear_resample(src: &Raster, out_width: usize, out_height: usize) -> Result<Raster> {
    let src = prepare(src, out_width, out_height, "bilinear_resample")?;
    let values = bilinear_plane(
        src.values(),
        src.width(),
        src.height(),
        out_width,
        out_height,
    );
    let geo = src.geo().scaled(src.width() as f64 / out_width as f64);
    Raster::new(out_width, out_height, values, geo)
}

/// Separable cubic convolution (Keys, `a = -0.5`).
pub fn bicubic_resample(src: &Raster, out_width: usize, out_height: usize) -> Result<Raster> {
    let src = prepare(src, out_width, out_height, "bicubic_resample")?;
    let (w, h) = src.dims();
    let xt = cubic_taps(w, out_width);
    let yt = cubic_taps(h, out_height);
    let v = src.values();

    let mut tmp = vec![0.0; h * out_width];
    for y in 0..h {
        let row = &v[y * w..(y + 1) * w];
        for (ox, tap) in xt.iter().enumerate() {
            tmp[y * out_width + ox] = (0..4).map(|k| tap.w[k] * row[tap.idx[k]]).sum();
        }
    }
    let mut out = vec![0.0; out_height * out_width];
    for (oy, tap) in yt.iter().enumerate() {
        for ox in 0..out_width {
            out[oy * out_width + ox] = (0..4)
                .map(|k| tap.w[k] * tmp[tap.idx[k] * out_width + ox])
                .sum();
        }
    }
    let geo = src.geo().scaled(w as f64 / out_width as f64);
    Raster::new(out_width, out_height, out, geo)
}

fn check_divisible(src: &Raster, factor: usize, what: &str) -> Result<()> {
    if factor == 0 {
        return Err(Error::InvalidArgument(format!(
            "{what}: factor must be >= 1"
        )));
    }
    let (w, h) = src.dims();
    if w % factor != 0 || h % factor != 0 {
        return Err(Error::Shape(format!(
            "{what}: raster {w}x{h} is not divisible by factor {factor}; crop it to {}x{} first",
            w - w % factor,
            h - h % factor
        )));
    }
    Ok(())
}

/// Mean over non-overlapping `factor x factor` blocks.
pub fn block_average_downsample(src: &Raster, factor: usize) -> Result<Raster> {
    check_divisible(src, factor, "block_average_downsample")?;
    let (src, replaced) = src.fill_nodata();
    if replaced > 0 {
        log::warn!("block_average_downsample: replaced {replaced} nodata pixels with 0");
    }
    let (w, h) = src.dims();
    let (ow, oh) = (w / factor, h / factor);
    let v = src.values();
    let mut sums = vec![0.0; ow * oh];
    for y in 0..h {
        let row = &v[y * w..(y + 1) * w];
        let dst = &mut sums[(y / factor) * ow..(y / factor + 1) * ow];
        for (bx, block) in row.chunks_exact(factor).enumerate() {
            dst[bx] += block.iter().sum::<f64>();
        }
    }
    let n = (factor * factor) as f64;
    for s in sums.iter_mut() {
        *s /= n;
    }
    Raster::new(ow, oh, sums, src.geo().scaled(factor as f64))
}

/// Operator deriving a low-resolution grid from a high-resolution one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Degradation {
    /// Mean of each block.
    #[default]
    BlockAverage,
    /// Keep one pixel per block (the one at offset `factor / 2`).
    Decimate,
    /// Gaussian blur with standard deviation `sigma` (HR pixels), then
    /// decimation.
    GaussianBlur { sigma: f64 },
}

fn gaussian_blur(src: &Raster, sigma: f64) -> Result<Raster> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gaussian sigma must be > 0, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let (w, h) = src.dims();
    let v = src.values();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kw)| kw * v[y * w + clamp(x as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kw)| kw * tmp[clamp(y as isize + k as isize - radius, h) * w + x])
                .sum();
        }
    }
    Raster::new(w, h, out, src.geo())
}

fn decimate(src: &Raster, factor: usize) -> Result<Raster> {
    let (w, h) = src.dims();
    let off = factor / 2;
    let geo = src.geo().scaled(factor as f64);
    Raster::from_fn(w / factor, h / factor, geo, |x, y| {
        src.get(x * factor + off, y * factor + off)
    })
}

/// Derive an LR grid from `src` by `factor` using `method`.
pub fn degrade(src: &Raster, factor: usize, method: Degradation) -> Result<Raster> {
    match method {
        Degradation::BlockAverage => block_average_downsample(src, factor),
        Degradation::Decimate => {
            check_divisible(src, factor, "decimate")?;
            decimate(&src.fill_nodata().0, factor)
        }
        Degradation::GaussianBlur { sigma } => {
            check_divisible(src, factor, "gaussian degrade")?;
            decimate(&gaussian_blur(&src.fill_nodata().0, sigma)?, factor)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GeoTransform;
    use proptest::prelude::*;

    fn r(w: usize, h: usize, v: &[f64]) -> Raster {
        Raster::from_vec(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn bilinear_two_to_four() {
        let out = bilinear_resample(&r(2, 1, &[0.0, 1.0]), 4, 1).unwrap();
        assert_eq!(out.values(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn bilinear_identity_dims() {
        let src = r(3, 2, &[1.0, -2.0, 3.5, 0.25, 7.0, 9.0]);
        let out = bilinear_resample(&src, 3, 2).unwrap();
        assert_eq!(out.values(), src.values());
    }

    #[test]
    fn keys_kernel_partition_of_unity() {
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let s: f64 = (-1..=2).map(|k| keys_weight(t - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-15, "t={t} sum={s}");
        }
        assert_eq!(keys_weight(0.0), 1.0);
        assert_eq!(keys_weight(1.0), 0.0);
        assert_eq!(keys_weight(2.0), 0.0);
    }

    #[test]
    fn block_average_two_by_two() {
        let out = block_average_downsample(&r(2, 2, &[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(out.values(), &[2.5]);
    }

    #[test]
    fn block_average_rejects_non_divisible() {
        let err = block_average_downsample(&r(3, 2, &[0.0; 6]), 2).unwrap_err();
        assert!(err.to_string().contains("crop"), "{err}");
    }

    #[test]
    fn resample_rejects_nonfinite() {
        let mut src = r(2, 2, &[0.0; 4]);
        src.values_mut()[1] = f64::INFINITY;
        assert!(matches!(
            bilinear_resample(&src, 4, 4),
            Err(Error::DataQuality(_))
        ));
        assert!(matches!(
            bicubic_resample(&src, 4, 4),
            Err(Error::DataQuality(_))
        ));
    }

    #[test]
    fn nodata_becomes_zero() {
        let src = Raster::with_nodata(
            2,
            1,
            vec![-9999.0, 4.0],
            GeoTransform::unit(),
            Some(-9999.0),
        )
        .unwrap();
        let out = bilinear_resample(&src, 2, 1).unwrap();
        assert_eq!(out.values(), &[0.0, 4.0]);
        assert_eq!(out.nodata(), None);
    }

    #[test]
    fn geo_metadata_rescaled() {
        let geo = GeoTransform::new(-125.0, 42.0, 0.1).unwrap();
        let src = Raster::filled(8, 4, 1.0, geo).unwrap();
        let up = bilinear_resample(&src, 32, 16).unwrap();
        assert!((up.geo().pixel_size - 0.025).abs() < 1e-15);
        assert_eq!(up.geo().origin_lon, -125.0);
        let down = block_average_downsample(&src, 4).unwrap();
        assert!((down.geo().pixel_size - 0.4).abs() < 1e-15);
    }

    #[test]
    fn degradation_variants() {
        let src = Raster::from_fn(4, 4, GeoTransform::unit(), |x, y| (x + 4 * y) as f64).unwrap();
        let d = degrade(&src, 2, Degradation::Decimate).unwrap();
        assert_eq!(d.values(), &[5.0, 7.0, 13.0, 15.0]);
        let c = Raster::filled(8, 8, 3.0, GeoTransform::unit()).unwrap();
        let g = degrade(&c, 4, Degradation::GaussianBlur { sigma: 1.0 }).unwrap();
        for v in g.values() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bilinear_constant_is_exact(c in -1e3f64..1e3, w in 1usize..7, h in 1usize..7,
                                      ow in 1usize..20, oh in 1usize..20) {
            let src = Raster::filled(w, h, c, GeoTransform::unit()).unwrap();
            let out = bilinear_resample(&src, ow, oh).unwrap();
            prop_assert!(out.values().iter().all(|&v| v == c));
        }

        #[test]
        fn bicubic_constant_is_exact(c in -1e3f64..1e3, w in 1usize..7, h in 1usize..7,
                                     ow in 1usize..20, oh in 1usize..20) {
            let src = Raster::filled(w, h, c, GeoTransform::unit()).unwrap();
            let out = bicubic_resample(&src, ow, oh).unwrap();
            for &v in out.values() {
                prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }

        #[test]
        fn bilinear_stays_in_source_range(
            vals in proptest::collection::vec(-50.0f64..50.0, 12),
            ow in 1usize..16, oh in 1usize..16,
        ) {
            let src = r(4, 3, &vals);
            let (lo, hi) = src.min_max();
            let out = bilinear_resample(&src, ow, oh).unwrap();
            prop_assert!(out.values().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn block_average_preserves_mean(vals in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let src = r(8, 8, &vals);
            let out = block_average_downsample(&src, 4).unwrap();
            let (a, b) = (src.mean(), out.mean());
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn bilinear_adjoint_identity(
            x in proptest::collection::vec(-1.0f64..1.0, 15),
            g in proptest::collection::vec(-1.0f64..1.0, 60),
        ) {
            let up = bilinear_plane(&x, 5, 3, 10, 6);
            let back = bilinear_plane_adjoint(&g, 5, 3, 10, 6);
            let lhs: f64 = up.iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
