use serde::{Deserialize, Serialize};

use crate::dataset::NormalizationSpec;
use crate::error::{Error, Result};
use crate::model::NetworkWeights;
use crate::raster::{bilinear_resample, block_average_downsample, ChannelStack, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoarseOptions {
    /// Divides the regridded fire-like channel (e.g. burned area in percent)
    /// into `[0, 1]`. `None` requires the channel to be within `[0, 1]`.
    pub fire_divisor: Option<f64>,
    pub normalization: NormalizationSpec,
}

impl Default for CoarseOptions {
    fn default() -> Self {
        Self {
            fire_divisor: Some(100.0),
            normalization: NormalizationSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseInference {
    /// Regridded, normalized network input.
    pub lr_input: ChannelStack,
    /// Clamped super-resolved exposure map.
    pub output: Raster,
}

fn filled(r: &Raster, what: &str) -> Raster {
    let (out, n) = r.fill_nodata();
    if n > 0 {
        log::warn!("coarse {what}: replaced {n} nodata pixels with 0");
    }
    out
}

/// Regrid coarse climate-model fields to `lr_dims`, normalize them and run
/// the network.
///
/// `coarse_temp_dev` is in degrees. `burnable` is block-averaged when it is
/// exactly `scale` times finer than `lr_dims` and bilinearly regridded
/// otherwise.
pub fn infer_coarse(
    net: &NetworkWeights,
    coarse_fire: &Raster,
    coarse_temp_dev: &Raster,
    burnable: &Raster,
    lr_dims: (usize, usize),
    opts: &CoarseOptions,
) -> Result<CoarseInference> {
    let (lw, lh) = lr_dims;
    if lw == 0 || lh == 0 {
        return Err(Error::InvalidArgument("lr_dims must be nonzero".into()));
    }
    opts.normalization.validate()?;

    let fire = bilinear_resample(&filled(coarse_fire, "fire"), lw, lh)?;
    let fire = match opts.fire_divisor {
        Some(d) if d.is_finite() && d > 0.0 => fire.map(|v| (v / d).clamp(0.0, 1.0)),
        Some(d) => {
            return Err(Error::InvalidArgument(format!(
                "fire divisor must be > 0, got {d}"
            )));
        }
        None => {
            let (lo, hi) = fire.min_max();
            if hi > 1.0 || lo < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "coarse fire channel spans [{lo}, {hi}]; a rescale divisor is required"
                )));
            }
            fire
        }
    };
    let geo = fire.geo();

    let temp = bilinear_resample(&filled(coarse_temp_dev, "temp_dev"), lw, lh)?;
    let temp = opts.normalization.normalize_temp(&temp).with_geo(geo);

    let f = net.scale.factor();
    let burn = filled(burnable, "burnable");
    let burn = if burn.dims() == (lw * f, lh * f) {
        block_average_downsample(&burn, f)?
    } else {
        bilinear_resample(&burn, lw, lh)?
    };
    let burn = burn.map(|v| opts.normalization.burnable(v)).with_geo(geo);

    let lr_input = ChannelStack::fire_temp_burnable(fire, temp, burn)?;
    let output = net.forward(&lr_input)?;
    Ok(CoarseInference { lr_input, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, ChannelConfig};
    use crate::raster::{ChannelRole, GeoTransform};
    use crate::scale::Scale;

    fn constant(w: usize, h: usize, v: f64, px: f64) -> Raster {
        Raster::filled(w, h, v, GeoTransform::new(-130.0, 50.0, px).unwrap()).unwrap()
    }

    #[test]
    fn constant_fields_give_constant_channels() {
        let net = build_network(Scale::X4, ChannelConfig::default(), 1).unwrap();
        let out = infer_coarse(
            &net,
            &constant(3, 2, 40.0, 1.4),
            &constant(3, 2, 2.5, 1.4),
            &constant(7, 5, 0.6, 0.5),
            (10, 6),
            &CoarseOptions::default(),
        )
        .unwrap();
        assert_eq!(out.output.dims(), (40, 24));
        assert!(out.output.values().iter().all(|&v| v >= 0.0));
        let expect = [
            (ChannelRole::Fire, 0.4),
            (ChannelRole::TempDev, 0.25),
            (ChannelRole::Burnable, 0.6),
        ];
        for (role, v) in expect {
            let ch = out.lr_input.get(role).unwrap();
            assert_eq!(ch.dims(), (10, 6));
            assert!(ch.values().iter().all(|&x| x == v), "{role:?}");
        }
    }

    #[test]
    fn missing_divisor_rejected_when_out_of_range() {
        let net = build_network(Scale::X2, ChannelConfig::default(), 1).unwrap();
        let opts = CoarseOptions {
            fire_divisor: None,
            ..Default::default()
        };
        let fire = constant(2, 2, 35.0, 1.0);
        let t = constant(2, 2, 0.0, 1.0);
        assert!(infer_coarse(&net, &fire, &t, &t, (4, 4), &opts).is_err());
        let frac = constant(2, 2, 0.35, 1.0);
        assert!(infer_coarse(&net, &frac, &t, &t, (4, 4), &opts).is_ok());
    }

    #[test]
    fn fine_burnable_is_block_averaged() {
        let net = build_network(Scale::X2, ChannelConfig::default(), 1).unwrap();
        let burn = Raster::from_fn(8, 4, GeoTransform::unit(), |x, _| (x % 2) as f64).unwrap();
        let z = constant(2, 2, 0.0, 1.0);
        let out = infer_coarse(&net, &z, &z, &burn, (4, 2), &CoarseOptions::default()).unwrap();
        let b = out.lr_input.get(ChannelRole::Burnable).unwrap();
        assert!(b.values().iter().all(|&v| v == 0.5));
    }
}
