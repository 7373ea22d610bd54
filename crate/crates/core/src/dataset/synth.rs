//! Seeded synthetic stand-in for the observed fire/temperature/land cover
//! inputs.
//!
//! Per region a static burnable field is drawn once: smoothed uniform noise
//! pushed through a clipped linear ramp, so it has exact 0 and 1 plateaus.
//! Each month then gets a temperature deviation field (smooth noise plus a
//! seasonal sinusoid) and fire counts made of paraboloid blobs seeded where
//! `burnable * max(0, temp_dev)` is high. Every blob pixel's count is
//! proportional to that local intensity, so unburnable or cool pixels never
//! burn.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_sample, NormalizationSpec, Sample, SampleOptions, YearMonth};
use crate::error::{Error, Result};
use crate::raster::{bilinear_resample, Degradation, GeoTransform, Raster};
use crate::scale::Scale;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub n_months: usize,
    /// HR width in pixels.
    pub width: usize,
    /// HR height in pixels.
    pub height: usize,
    pub scale: Scale,
    pub start: YearMonth,
    pub regions: Vec<String>,
    pub geo: GeoTransform,
    pub normalization: NormalizationSpec,
    /// Candidate blob sites per 1000 HR pixels per month.
    pub blob_density: f64,
}

impl SynthParams {
    pub fn new(seed: u64, n_months: usize, dims: (usize, usize), scale: Scale) -> Self {
        Self {
            seed,
            n_months,
            width: dims.0,
            height: dims.1,
            scale,
            start: YearMonth {
                year: 2000,
                month: 3,
            },
            regions: vec!["SYN".to_string()],
            geo: GeoTransform {
                origin_lon: -124.0,
                origin_lat: 42.0,
                pixel_size: 0.1,
            },
            normalization: NormalizationSpec::default(),
            blob_density: 2.5,
        }
    }

    fn validate(&self) -> Result<()> {
        let f = self.scale.factor();
        if self.width == 0
            || self.height == 0
            || !self.width.is_multiple_of(f)
            || !self.height.is_multiple_of(f)
        {
            return Err(Error::InvalidArgument(format!(
                "synthetic dims {}x{} must be nonzero multiples of the scale {f}",
                self.width, self.height
            )));
        }
        if self.regions.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one region is required".into(),
            ));
        }
        if !(self.blob_density.is_finite() && self.blob_density >= 0.0) {
            return Err(Error::InvalidArgument("blob_density must be >= 0".into()));
        }
        self.normalization.validate()
    }
}

/// Raw (un-normalized) HR channels for one region-month.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMonth {
    pub when: YearMonth,
    pub region: String,
    /// Integer fire counts in `[0, 254]`.
    pub fire_counts: Raster,
    /// Degrees.
    pub temp_dev: Raster,
    pub burnable: Raster,
}

/// Uniform noise on a coarse lattice, bilinearly interpolated to `w x h`.
fn smooth_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, cell: usize) -> Result<Raster> {
    let cw = w.div_ceil(cell) + 1;
    let ch = h.div_ceil(cell) + 1;
    let coarse: Vec<f64> = (0..cw * ch).map(|_| rng.random::<f64>()).collect();
    bilinear_resample(&Raster::from_vec(cw, ch, coarse)?, w, h)
}

fn burnable_field(rng: &mut ChaCha8Rng, p: &SynthParams) -> Result<Raster> {
    let broad = smooth_noise(rng, p.width, p.height, 24)?;
    let fine = smooth_noise(rng, p.width, p.height, 6)?;
    let values = broad
        .values()
        .iter()
        .zip(fine.values())
        .map(|(a, b)| ((0.7 * a + 0.3 * b - 0.45) * 4.0 + 0.5).clamp(0.0, 1.0))
        .collect();
    Raster::new(p.width, p.height, values, p.geo)
}

fn temp_field(
    rng: &mut ChaCha8Rng,
    p: &SynthParams,
    when: YearMonth,
    phase_months: f64,
) -> Result<Raster> {
    let seasonal = 2.5 * (2.0 * PI * (when.month as f64 - 7.0 + phase_months) / 12.0).cos();
    let offset = rng.random_range(-1.0..1.0);
    let noise = smooth_noise(rng, p.width, p.height, 32)?;
    let values = noise
        .values()
        .iter()
        .map(|n| seasonal + offset + 6.0 * (n - 0.5))
        .collect();
    Raster::new(p.width, p.height, values, p.geo)
}

fn fire_field(
    rng: &mut ChaCha8Rng,
    p: &SynthParams,
    burnable: &Raster,
    temp: &Raster,
) -> Result<Raster> {
    let (w, h) = (p.width, p.height);
    let intensity: Vec<f64> = burnable
        .values()
        .iter()
        .zip(temp.values())
        .map(|(b, t)| b * t.max(0.0))
        .collect();
    let mut counts = vec![0.0; w * h];
    let candidates = (p.blob_density * (w * h) as f64 / 1000.0).round() as usize;
    for _ in 0..candidates {
        let cx = rng.random_range(0..w);
        let cy = rng.random_range(0..h);
        let radius: f64 = 1.5 + 5.0 * rng.random::<f64>();
        let gain: f64 = 30.0 + 50.0 * rng.random::<f64>();
        let accept: f64 = rng.random();
        if accept >= (intensity[cy * w + cx] / 4.0).min(1.0) {
            continue;
        }
        let reach = radius.ceil() as isize;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                    continue;
                }
                let d2 = (dx * dx + dy * dy) as f64;
                let profile = 1.0 - d2 / (radius * radius);
                if profile > 0.0 {
                    let i = y as usize * w + x as usize;
                    counts[i] += gain * profile * intensity[i];
                }
            }
        }
    }
    for c in counts.iter_mut() {
        *c = c.round().clamp(0.0, 254.0);
    }
    Raster::new(w, h, counts, p.geo)
}

/// Raw HR channels for every region and month, ordered by (month, region).
pub fn synth_raw(p: &SynthParams) -> Result<Vec<RawMonth>> {
    p.validate()?;
    let mut per_region = Vec::with_capacity(p.regions.len());
    for (ri, region) in p.regions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(ri as u64);
        let burnable = burnable_field(&mut rng, p)?;
        // alternate hemispheres between regions
        let phase = if ri % 2 == 0 { 0.0 } else { 6.0 };
        let mut months = Vec::with_capacity(p.n_months);
        for k in 0..p.n_months {
            let when = p.start.plus_months(k as i64);
            let temp_dev = temp_field(&mut rng, p, when, phase)?;
            let fire_counts = fire_field(&mut rng, p, &burnable, &temp_dev)?;
            months.push(RawMonth {
                when,
                region: region.clone(),
                fire_counts,
                temp_dev,
                burnable: burnable.clone(),
            });
        }
        per_region.push(months);
    }
    let mut out = Vec::with_capacity(p.n_months * p.regions.len());
    for k in 0..p.n_months {
        for months in &per_region {
            out.push(months[k].clone());
        }
    }
    Ok(out)
}

/// Synthetic samples for the given parameters.
pub fn synth_generate_with(p: &SynthParams) -> Result<Vec<Sample>> {
    let opts = SampleOptions {
        scale: p.scale,
        normalization: p.normalization,
        degradation: Degradation::BlockAverage,
    };
    synth_raw(p)?
        .iter()
        .map(|m| {
            build_sample(
                &m.fire_counts,
                &m.temp_dev,
                &m.burnable,
                m.when,
                &m.region,
                &opts,
            )
        })
        .collect()
}

/// Synthetic samples with default generator settings; `dims` is the HR
/// `(width, height)`.
pub fn synth_generate(
    seed: u64,
    n_months: usize,
    dims: (usize, usize),
    scale: Scale,
) -> Result<Vec<Sample>> {
    synth_generate_with(&SynthParams::new(seed, n_months, dims, scale))
}
