//! Turning raw channel rasters into normalized LR/HR training samples.

mod climatology;
mod landcover;
mod manifest;
mod normalize;
mod sample;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub use climatology::{temp_deviation, ClimatologyMode, ClimatologyWindow};
pub use landcover::{burnable_index, LandcoverMapping, ESA_CCI_CLASSES};
pub use manifest::{
    assign_splits, split_manifest, DatasetInfo, DatasetManifest, ManifestRecord, MonthMask, Split,
    SplitIndices, SplitOptions, DATASET_INFO_FILE, MANIFEST_FILE,
};
pub use normalize::NormalizationSpec;
pub use sample::{build_sample, sample_id, Sample, SampleOptions};
pub use synth::{synth_generate, synth_generate_with, synth_raw, RawMonth, SynthParams};

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidArgument(format!(
                "month must be 1-12, got {month}"
            )));
        }
        Ok(Self { year, month })
    }

    /// Months since year 0.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(i: i64) -> Self {
        Self {
            year: i.div_euclid(12) as i32,
            month: i.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn plus_months(self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("expected YYYY-MM, got {s:?}")))?;
        let year = y
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad year in {s:?}")))?;
        let month = m
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad month in {s:?}")))?;
        Self::new(year, month)
    }
}

/// One raster of a monthly series.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyRaster {
    pub when: YearMonth,
    pub raster: Raster,
}
