use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{MonthlyRaster, YearMonth};
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClimatologyMode {
    /// Each month is compared against the mean of the same calendar month.
    #[default]
    PerCalendarMonth,
    /// Each month is compared against the mean over every month in the window.
    AllMonths,
}

/// Reference period for temperature anomalies (inclusive years).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClimatologyWindow {
    pub start_year: i32,
    pub end_year: i32,
    pub mode: ClimatologyMode,
}

impl Default for ClimatologyWindow {
    fn default() -> Self {
        Self {
            start_year: 2000,
            end_year: 2019,
            mode: ClimatologyMode::PerCalendarMonth,
        }
    }
}

/// Per-pixel running mean that tracks pixels masked out by nodata.
struct PixelMean {
    sum: Vec<f64>,
    valid: Vec<bool>,
    n: usize,
}

impl PixelMean {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            valid: vec![true; len],
            n: 0,
        }
    }

    fn add(&mut self, r: &Raster) {
        for ((s, ok), &v) in self
            .sum
            .iter_mut()
            .zip(self.valid.iter_mut())
            .zip(r.values())
        {
            if r.is_nodata(v) {
                *ok = false;
            } else {
                *s += v;
            }
        }
        self.n += 1;
    }
}

/// Subtract each pixel's climatological mean from every month of `series`.
///
/// Every calendar month that occurs in the series must be present for every
/// year of the window. A pixel that is nodata in any reference month stays
/// nodata in the output.
pub fn temp_deviation(
    series: &[MonthlyRaster],
    window: &ClimatologyWindow,
) -> Result<Vec<MonthlyRaster>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    if window.start_year > window.end_year {
        return Err(Error::InvalidArgument(format!(
            "climatology window {}..={} is empty",
            window.start_year, window.end_year
        )));
    }
    let mut by_month: BTreeMap<YearMonth, &Raster> = BTreeMap::new();
    for m in series {
        if !m.raster.same_grid(&first.raster) {
            return Err(Error::Shape(format!(
                "temperature {} is on grid {}x{} {:?}, expected {}x{} {:?}",
                m.when,
                m.raster.width(),
                m.raster.height(),
                m.raster.geo(),
                first.raster.width(),
                first.raster.height(),
                first.raster.geo()
            )));
        }
        if by_month.insert(m.when, &m.raster).is_some() {
            return Err(Error::DataQuality(format!(
                "temperature {} appears twice",
                m.when
            )));
        }
    }

    let calendar_months: BTreeSet<u32> = series.iter().map(|m| m.when.month).collect();
    let mut gaps = Vec::new();
    for year in window.start_year..=window.end_year {
        for &month in &calendar_months {
            let ym = YearMonth { year, month };
            if !by_month.contains_key(&ym) {
                gaps.push(ym.to_string());
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::DataQuality(format!(
            "climatology window {}-{} is missing {} month(s): {}{}",
            window.start_year,
            window.end_year,
            gaps.len(),
            gaps[..gaps.len().min(6)].join(", "),
            if gaps.len() > 6 { ", ..." } else { "" }
        )));
    }

    let len = first.raster.len();
    let mut means: BTreeMap<u32, PixelMean> = BTreeMap::new();
    for (ym, r) in by_month.range(
        YearMonth {
            year: window.start_year,
            month: 1,
        }..=YearMonth {
            year: window.end_year,
            month: 12,
        },
    ) {
        let key = match window.mode {
            ClimatologyMode::PerCalendarMonth => ym.month,
            ClimatologyMode::AllMonths => 0,
        };
        means
            .entry(key)
            .or_insert_with(|| PixelMean::new(len))
            .add(r);
    }

    let nodata = first.raster.nodata();
    series
        .iter()
        .map(|m| {
            let key = match window.mode {
                ClimatologyMode::PerCalendarMonth => m.when.month,
                ClimatologyMode::AllMonths => 0,
            };
            let clim = &means[&key];
            // only reachable when the series carries a nodata sentinel
            let sentinel = nodata.unwrap_or(f64::NAN);
            let values: Vec<f64> = m
                .raster
                .values()
                .iter()
                .zip(clim.sum.iter().zip(&clim.valid))
                .map(|(&v, (&s, &ok))| {
                    if ok && !m.raster.is_nodata(v) {
                        v - s / clim.n as f64
                    } else {
                        sentinel
                    }
                })
                .collect();
            let raster = Raster::with_nodata(
                m.raster.width(),
                m.raster.height(),
                values,
                m.raster.geo(),
                nodata,
            )?;
            Ok(MonthlyRaster {
                when: m.when,
                raster,
            })
        })
        .collect()
}
