//! On-disk raster formats.
//!
//! `FSR1` layout:
//!
//! | bytes        | content                                             |
//! |--------------|-----------------------------------------------------|
//! | 0..4         | magic `FSR1`                                        |
//! | 4..8         | header length `N`, little-endian u32                |
//! | 8..8+N       | UTF-8 JSON header                                   |
//! | 8+N..        | `width * height` little-endian f32, row-major, N→S  |
//!
//! Values are stored as f32, so a round trip is bit-exact for any raster whose
//! values are representable in single precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeoTransform, Raster};
use crate::container;
use crate::error::{Error, Result};

pub const RASTER_MAGIC: &[u8; 4] = b"FSR1";

#[derive(Debug, Serialize, Deserialize)]
struct RasterHeader {
    width: usize,
    height: usize,
    pixel_size: f64,
    origin_lon: f64,
    origin_lat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodata: Option<f64>,
    dtype: String,
}

pub fn encode_raster(r: &Raster) -> Result<Vec<u8>> {
    let nodata = match r.nodata() {
        Some(nd) if !nd.is_finite() => {
            return Err(Error::InvalidArgument(
                "FSR nodata sentinel must be finite".into(),
            ))
        }
        nd => nd.map(|v| v as f32 as f64),
    };
    let geo = r.geo();
    let header = RasterHeader {
        width: r.width(),
        height: r.height(),
        pixel_size: geo.pixel_size,
        origin_lon: geo.origin_lon,
        origin_lat: geo.origin_lat,
        nodata,
        dtype: "f32".into(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = container::join(RASTER_MAGIC, &json, 4 * r.len());
    container::put_f32s(&mut out, r.values());
    Ok(out)
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    let (header, payload) = container::split(bytes, RASTER_MAGIC, "FSR raster")?;
    let header: RasterHeader = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("FSR raster header: {e}")))?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!(
            "FSR raster: unsupported dtype {:?}",
            header.dtype
        )));
    }
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("FSR raster: dims overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "FSR raster: header declares {}x{} ({expected} payload bytes) but payload has {} bytes",
            header.width,
            header.height,
            payload.len()
        )));
    }
    let values = container::get_f32s(payload);
    let geo = GeoTransform::new(header.origin_lon, header.origin_lat, header.pixel_size)?;
    Raster::with_nodata(header.width, header.height, values, geo, header.nodata)
}

pub fn write_raster(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raster(r)?).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes)
}

fn unit_scale(r: &Raster, range: Option<(f64, f64)>) -> impl Fn(f64) -> Option<f64> + '_ {
    let (lo, hi) = range.unwrap_or_else(|| r.min_max());
    move |v: f64| {
        if r.is_nodata(v) {
            None
        } else if !(hi > lo) {
            Some(0.5)
        } else {
            Some(((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        }
    }
}

/// 8-bit binary PGM, min-max scaled. A flat raster maps to mid-gray and
/// nodata to black.
pub fn encode_pgm(r: &Raster) -> Vec<u8> {
    let scale = unit_scale(r, None);
    let mut out = format!("P5\n{} {}\n255\n", r.width(), r.height()).into_bytes();
    out.extend(
        r.values()
            .iter()
            .map(|&v| scale(v).map_or(0, |t| (t * 255.0).round() as u8)),
    );
    out
}

pub fn write_pgm(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(r)).map_err(|e| Error::io(path, e))
}

fn heat(t: f64) -> [u8; 3] {
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [c(3.0 * t), c(3.0 * t - 1.0), c(3.0 * t - 2.0)]
}

/// Binary PPM with a black-red-yellow-white ramp over `range` (min-max of the
/// raster when `None`).
pub fn encode_ppm_heat(r: &Raster, range: Option<(f64, f64)>) -> Vec<u8> {
    let scale = unit_scale(r, range);
    let mut out = format!("P6\n{} {}\n255\n", r.width(), r.height()).into_bytes();
    for &v in r.values() {
        out.extend_from_slice(&scale(v).map_or([0, 0, 255], heat));
    }
    out
}

pub fn write_ppm_heat(r: &Raster, range: Option<(f64, f64)>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm_heat(r, range)).map_err(|e| Error::io(path, e))
}

/// Build a raster from `row,col,value` triples. Cells not listed are zero.
/// A non-numeric first line is treated as a header.
pub fn read_csv_raster(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    geo: GeoTransform,
) -> Result<Raster> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = vec![0.0; width * height];
    let mut seen = vec![false; width * height];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != 3 {
            return Err(Error::Format(format!(
                "{}: line {} has {} fields, expected row,col,value",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        let parsed = (
            record[0].parse::<usize>(),
            record[1].parse::<usize>(),
            record[2].parse::<f64>(),
        );
        let (row, col, value) = match parsed {
            (Ok(r), Ok(c), Ok(v)) => (r, c, v),
            _ if line == 0 => continue,
            _ => {
                return Err(Error::Format(format!(
                    "{}: line {}: cannot parse {:?}",
                    path.display(),
                    line + 1,
                    record
                )))
            }
        };
        if row >= height || col >= width {
            return Err(Error::DataQuality(format!(
                "{}: cell ({row}, {col}) outside {width}x{height} grid",
                path.display()
            )));
        }
        let i = row * width + col;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DataQuality(format!(
                "{}: cell ({row}, {col}) listed twice",
                path.display()
            )));
        }
        values[i] = value;
    }
    Raster::new(width, height, values, geo)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::Format(format!("{}: {e}", path.display())),
    }
}
