use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Scaling of raw channels into network units.
///
/// Fire counts map to `clip(count, 0, fire_cap) / fire_cap` in `[0, 1]`,
/// temperature deviations to `clip(dev, -h, h) / h` in `[-1, 1]`, and the
/// burnable index is already in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationSpec {
    pub fire_cap: f64,
    pub temp_halfrange: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self {
            fire_cap: 254.0,
            temp_halfrange: 10.0,
        }
    }
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fire_cap.is_finite() && self.fire_cap > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fire_cap must be > 0, got {}",
                self.fire_cap
            )));
        }
        if !(self.temp_halfrange.is_finite() && self.temp_halfrange > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temp_halfrange must be > 0, got {}",
                self.temp_halfrange
            )));
        }
        Ok(())
    }

    pub fn fire(&self, count: f64) -> f64 {
        count.clamp(0.0, self.fire_cap) / self.fire_cap
    }

    pub fn temp(&self, dev: f64) -> f64 {
        dev.clamp(-self.temp_halfrange, self.temp_halfrange) / self.temp_halfrange
    }

    pub fn burnable(&self, b: f64) -> f64 {
        b.clamp(0.0, 1.0)
    }

    pub fn normalize_fire(&self, counts: &Raster) -> Raster {
        counts.map(|v| self.fire(v))
    }

    pub fn normalize_temp(&self, dev: &Raster) -> Raster {
        dev.map(|v| self.temp(v))
    }

    /// Normalized fire back to (real-valued) counts.
    pub fn denormalize_fire(&self, fire: &Raster) -> Raster {
        fire.map(|v| v * self.fire_cap)
    }

    /// Normalized fire back to integer counts.
    pub fn fire_counts(&self, fire: &Raster) -> Vec<u32> {
        fire.values()
            .iter()
            .map(|v| (v * self.fire_cap).round().max(0.0) as u32)
            .collect()
    }
}
