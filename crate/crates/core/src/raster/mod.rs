//! Single-channel geospatial grids and the resampling/codec machinery around
//! them.
//!
//! Grids are plate-carrée: `origin_lon`/`origin_lat` locate the north-west
//! corner of the top-left pixel, rows run north to south and every pixel is
//! `pixel_size` degrees on a side.

mod codec;
mod resample;

pub use codec::{
    decode_raster, encode_pgm, encode_ppm_heat, encode_raster, read_csv_raster, read_raster,
    write_pgm, write_ppm_heat, write_raster, RASTER_MAGIC,
};
pub use resample::{
    bicubic_resample, bilinear_resample, block_average_downsample, degrade, keys_weight,
    Degradation,
};
pub(crate) use resample::{bilinear_plane, bilinear_plane_adjoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement of a grid on the globe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_lon: f64,
    pub origin_lat: f64,
    /// Degrees per pixel, identical in both axes.
    pub pixel_size: f64,
}

impl GeoTransform {
    pub fn new(origin_lon: f64, origin_lat: f64, pixel_size: f64) -> Result<Self> {
        let geo = Self {
            origin_lon,
            origin_lat,
            pixel_size,
        };
        geo.validate()?;
        Ok(geo)
    }

    /// Unit grid anchored at (0, 0); handy for fixtures that carry no geography.
    pub const fn unit() -> Self {
        Self {
            origin_lon: 0.0,
            origin_lat: 0.0,
            pixel_size: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.pixel_size.is_finite() && self.pixel_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel_size must be positive and finite, got {}",
                self.pixel_size
            )));
        }
        if !self.origin_lon.is_finite() || !self.origin_lat.is_finite() {
            return Err(Error::InvalidArgument(
                "raster origin must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Same corner, pixels scaled by `factor` (>1 coarsens).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pixel_size: self.pixel_size * factor,
            ..*self
        }
    }
}

impl Default for GeoTransform {
    fn default() -> Self {
        Self::unit()
    }
}

/// A row-major single-channel grid of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    values: Vec<f64>,
    geo: GeoTransform,
    nodata: Option<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, values: Vec<f64>, geo: GeoTransform) -> Result<Self> {
        Self::with_nodata(width, height, values, geo, None)
    }

    pub fn with_nodata(
        width: usize,
        height: usize,
        values: Vec<f64>,
        geo: GeoTransform,
        nodata: Option<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "raster dims must be at least 1x1, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "raster {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        geo.validate()?;
        let is_nodata = |v: f64| nodata.is_some_and(|nd| v == nd || (nd.is_nan() && v.is_nan()));
        if let Some(i) = values.iter().position(|&v| !v.is_finite() && !is_nodata(v)) {
            return Err(Error::DataQuality(format!(
                "nonfinite value {} at pixel ({}, {})",
                values[i],
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            geo,
            nodata,
        })
    }

    /// Raster on the unit grid.
    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, values, GeoTransform::unit())
    }

    pub fn filled(width: usize, height: usize, value: f64, geo: GeoTransform) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], geo)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        geo: GeoTransform,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values, geo)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the pixel buffer. Callers are responsible for
    /// keeping values finite; the resamplers re-check.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn geo(&self) -> GeoTransform {
        self.geo
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn with_geo(mut self, geo: GeoTransform) -> Self {
        self.geo = geo;
        self
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => v.is_nan(),
            Some(nd) => v == nd,
            None => false,
        }
    }

    /// Copy with nodata pixels replaced by zero, plus how many were replaced.
    pub fn fill_nodata(&self) -> (Raster, usize) {
        let mut out = self.clone();
        out.nodata = None;
        let mut replaced = 0;
        if self.nodata.is_some() {
            for v in out.values.iter_mut() {
                if self.is_nodata(*v) {
                    *v = 0.0;
                    replaced += 1;
                }
            }
        }
        (out, replaced)
    }

    /// Apply `f` to every pixel. Nodata pixels are passed through untouched.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Raster {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            if !self.is_nodata(*v) {
                *v = f(*v);
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .filter(|v| !self.is_nodata(**v))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// True when both rasters share dims and geotransform exactly.
    pub fn same_grid(&self, other: &Raster) -> bool {
        self.dims() == other.dims() && self.geo == other.geo
    }

    /// Sub-window `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Shape(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds raster {}x{}",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            values.extend_from_slice(&self.values[y * self.width + x0..y * self.width + x0 + w]);
        }
        let geo = GeoTransform {
            origin_lon: self.geo.origin_lon + x0 as f64 * self.geo.pixel_size,
            origin_lat: self.geo.origin_lat - y0 as f64 * self.geo.pixel_size,
            pixel_size: self.geo.pixel_size,
        };
        Ok(Raster {
            width: w,
            height: h,
            values,
            geo,
            nodata: self.nodata,
        })
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DataQuality(format!(
                "{what}: nonfinite value {} at pixel ({}, {})",
                self.values[i],
                i % self.width,
                i / self.width
            )));
        }
        Ok(())
    }
}

/// Semantic role of one input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    Fire,
    TempDev,
    Burnable,
}

impl ChannelRole {
    /// Order the network expects.
    pub const NETWORK_ORDER: [ChannelRole; 3] = [
        ChannelRole::Fire,
        ChannelRole::TempDev,
        ChannelRole::Burnable,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelRole::Fire => "fire",
            ChannelRole::TempDev => "temp_dev",
            ChannelRole::Burnable => "burnable",
        }
    }
}

/// Co-registered rasters with distinct roles.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    channels: Vec<Raster>,
    roles: Vec<ChannelRole>,
}

impl ChannelStack {
    pub fn new(channels: Vec<Raster>, roles: Vec<ChannelRole>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument(
                "channel stack needs at least one channel".into(),
            ));
        }
        if channels.len() != roles.len() {
            return Err(Error::Shape(format!(
                "{} channels but {} roles",
                channels.len(),
                roles.len()
            )));
        }
        for (i, role) in roles.iter().enumerate() {
            if roles[..i].contains(role) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate channel role {}",
                    role.as_str()
                )));
            }
        }
        let first = &channels[0];
        for (c, role) in channels.iter().zip(&roles).skip(1) {
            if !c.same_grid(first) {
                return Err(Error::Shape(format!(
                    "channel {} is {}x{} at {:?}, expected {}x{} at {:?}",
                    role.as_str(),
                    c.width(),
                    c.height(),
                    c.geo(),
                    first.width(),
                    first.height(),
                    first.geo()
                )));
            }
        }
        Ok(Self { channels, roles })
    }

    /// Stack in network order: fire, temperature deviation, burnability.
    pub fn fire_temp_burnable(fire: Raster, temp_dev: Raster, burnable: Raster) -> Result<Self> {
        Self::new(
            vec![fire, temp_dev, burnable],
            ChannelRole::NETWORK_ORDER.to_vec(),
        )
    }

    pub fn channels(&self) -> &[Raster] {
        &self.channels
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn geo(&self) -> GeoTransform {
        self.channels[0].geo()
    }

    pub fn get(&self, role: ChannelRole) -> Option<&Raster> {
        self.roles
            .iter()
            .position(|r| *r == role)
            .map(|i| &self.channels[i])
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ChannelStack> {
        let channels = self
            .channels
            .iter()
            .map(|c| c.crop(x0, y0, w, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelStack {
            channels,
            roles: self.roles.clone(),
        })
    }
}
