use serde::{Deserialize, Serialize};

use super::{NormalizationSpec, YearMonth};
use crate::error::{Error, Result};
use crate::raster::{degrade, ChannelRole, ChannelStack, Degradation, Raster};
use crate::scale::Scale;

/// One LR input stack paired with its HR fire target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub lr_input: ChannelStack,
    pub hr_target: Raster,
    pub when: YearMonth,
    pub region: String,
    pub scale: Scale,
}

impl Sample {
    /// Check dims and normalized value ranges.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.lr_input.dims();
        let f = self.scale.factor();
        if self.hr_target.dims() != (w * f, h * f) {
            return Err(Error::Shape(format!(
                "sample {}: HR target {:?} is not LR {:?} x {f}",
                self.id,
                self.hr_target.dims(),
                (w, h)
            )));
        }
        if self.lr_input.roles() != ChannelRole::NETWORK_ORDER {
            return Err(Error::Shape(format!(
                "sample {}: channel roles {:?} are not (fire, temp_dev, burnable)",
                self.id,
                self.lr_input.roles()
            )));
        }
        let in_range =
            |r: &Raster, lo: f64, hi: f64| r.values().iter().all(|v| (lo..=hi).contains(v));
        let [fire, temp, burn] = &self.lr_input.channels() else {
            unreachable!("roles checked above")
        };
        let ok = in_range(fire, 0.0, 1.0)
            && in_range(temp, -1.0, 1.0)
            && in_range(burn, 0.0, 1.0)
            && in_range(&self.hr_target, 0.0, 1.0);
        if !ok {
            return Err(Error::DataQuality(format!(
                "sample {}: channel values outside normalized ranges",
                self.id
            )));
        }
        Ok(())
    }

    pub fn fire_lr(&self) -> &Raster {
        &self.lr_input.channels()[0]
    }
}

/// Stable identifier `REGION-YYYY-MM`.
pub fn sample_id(region: &str, when: YearMonth) -> String {
    format!("{region}-{when}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub scale: Scale,
    #[serde(default)]
    pub normalization: NormalizationSpec,
    #[serde(default)]
    pub degradation: Degradation,
}

impl SampleOptions {
    pub fn new(scale: Scale) -> Self {
        Self {
            scale,
            normalization: NormalizationSpec::default(),
            degradation: Degradation::BlockAverage,
        }
    }
}

fn fill(r: &Raster, what: &str) -> Raster {
    let (out, n) = r.fill_nodata();
    if n > 0 {
        log::warn!("{what}: replaced {n} nodata pixels with 0");
    }
    out
}

/// Normalize three co-registered HR channels and derive the LR input stack.
///
/// `fire_hr` holds raw counts, `temp_dev_hr` deviations in degrees and
/// `burnable_hr` the `[0, 1]` index.
pub fn build_sample(
    fire_hr: &Raster,
    temp_dev_hr: &Raster,
    burnable_hr: &Raster,
    when: YearMonth,
    region: &str,
    opts: &SampleOptions,
) -> Result<Sample> {
    opts.normalization.validate()?;
    for (name, r) in [("temp_dev", temp_dev_hr), ("burnable", burnable_hr)] {
        if !r.same_grid(fire_hr) {
            return Err(Error::Shape(format!(
                "{name} grid {}x{} {:?} does not match fire grid {}x{} {:?}",
                r.width(),
                r.height(),
                r.geo(),
                fire_hr.width(),
                fire_hr.height(),
                fire_hr.geo()
            )));
        }
    }
    let norm = &opts.normalization;
    let fire = norm.normalize_fire(&fill(fire_hr, "fire"));
    let temp = norm.normalize_temp(&fill(temp_dev_hr, "temp_dev"));
    let burn = fill(burnable_hr, "burnable").map(|v| norm.burnable(v));
    for (name, r) in [("fire", &fire), ("temp_dev", &temp), ("burnable", &burn)] {
        r.ensure_finite(name)?;
    }

    let f = opts.scale.factor();
    let lr = ChannelStack::fire_temp_burnable(
        degrade(&fire, f, opts.degradation)?,
        degrade(&temp, f, opts.degradation)?,
        degrade(&burn, f, opts.degradation)?,
    )?;
    Ok(Sample {
        id: sample_id(region, when),
        lr_input: lr,
        hr_target: fire,
        when,
        region: region.to_string(),
        scale: opts.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{block_average_downsample, GeoTransform};
    use proptest::prelude::*;

    fn ym() -> YearMonth {
        YearMonth::new(2010, 8).unwrap()
    }

    fn zeros(w: usize, h: usize) -> Raster {
        Raster::filled(w, h, 0.0, GeoTransform::unit()).unwrap()
    }

    #[test]
    fn all_zero_fire() {
        let z = zeros(8, 8);
        let s = build_sample(&z, &z, &z, ym(), "US", &SampleOptions::new(Scale::X4)).unwrap();
        assert!(s.hr_target.values().iter().all(|&v| v == 0.0));
        assert!(s.fire_lr().values().iter().all(|&v| v == 0.0));
        assert_eq!(s.id, "US-2010-08");
        s.validate().unwrap();
    }

    #[test]
    fn single_saturated_pixel_scale_four() {
        let mut fire = zeros(8, 8);
        fire.set(1, 2, 254.0);
        let z = zeros(8, 8);
        let s = build_sample(&fire, &z, &z, ym(), "US", &SampleOptions::new(Scale::X4)).unwrap();
        assert_eq!(s.fire_lr().get(0, 0), 1.0 / 16.0);
        assert_eq!(s.fire_lr().get(1, 0), 0.0);
        assert_eq!(s.hr_target.get(1, 2), 1.0);
    }

    #[test]
    fn burnable_channel_is_block_mean() {
        let b = Raster::from_fn(8, 8, GeoTransform::unit(), |x, y| {
            ((x * 3 + y) % 5) as f64 / 4.0
        })
        .unwrap();
        let z = zeros(8, 8);
        let s = build_sample(&z, &z, &b, ym(), "AUS", &SampleOptions::new(Scale::X2)).unwrap();
        let expect = block_average_downsample(&b, 2).unwrap();
        assert_eq!(s.lr_input.get(ChannelRole::Burnable).unwrap(), &expect);
    }

    #[test]
    fn misaligned_grids_report_both_transforms() {
        let a = zeros(8, 8);
        let b = a
            .clone()
            .with_geo(GeoTransform::new(10.0, 0.0, 1.0).unwrap());
        let err = build_sample(&a, &b, &a, ym(), "US", &SampleOptions::new(Scale::X2)).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("origin_lon: 10.0") && msg.contains("origin_lon: 0.0"),
            "{msg}"
        );
    }

    #[test]
    fn non_divisible_dims_rejected() {
        let a = zeros(6, 8);
        assert!(build_sample(&a, &a, &a, ym(), "US", &SampleOptions::new(Scale::X4)).is_err());
    }

    proptest! {
        #[test]
        fn normalized_ranges_hold(
            counts in proptest::collection::vec(0u32..400, 64),
            temps in proptest::collection::vec(-30.0f64..30.0, 64),
            burn in proptest::collection::vec(0.0f64..=1.0, 64),
        ) {
            let geo = GeoTransform::unit();
            let fire = Raster::new(8, 8, counts.iter().map(|&c| c as f64).collect(), geo).unwrap();
            let temp = Raster::new(8, 8, temps, geo).unwrap();
            let burn = Raster::new(8, 8, burn, geo).unwrap();
            let s = build_sample(&fire, &temp, &burn, ym(), "US", &SampleOptions::new(Scale::X2)).unwrap();
            prop_assert!(s.validate().is_ok());
            let norm = NormalizationSpec::default();
            let back = norm.fire_counts(&s.hr_target);
            for (b, c) in back.iter().zip(&counts) {
                prop_assert_eq!(*b, (*c).min(254));
            }
        }
    }
}
