//! Temporal/regional splits and the on-disk dataset layout.
//!
//! A dataset directory holds `dataset.json` (scale, normalization, seed and
//! split options), `manifest.jsonl` (one record per sample) and the sample
//! rasters under `samples/<id>/`. Raster paths in the manifest are relative to
//! the directory containing it.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Sample, YearMonth};
use crate::dataset::NormalizationSpec;
use crate::error::{Error, Result};
use crate::raster::{read_raster, write_raster, ChannelStack, Degradation};
use crate::scale::Scale;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DATASET_INFO_FILE: &str = "dataset.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Months dropped from a dataset, e.g. for data-quality reasons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthMask {
    /// Applies to every region when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    pub year: i32,
    pub months: Vec<u32>,
}

impl MonthMask {
    pub fn matches(&self, when: YearMonth, region: &str) -> bool {
        self.region.as_deref().is_none_or(|r| r == region)
            && self.year == when.year
            && self.months.contains(&when.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitOptions {
    /// Fraction of pre-test months (the chronologically last ones) used for
    /// validation.
    pub val_fraction: f64,
    /// First year of the held-out test period.
    pub test_start_year: i32,
    /// Keep only these regions (all splits) when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<String>>,
    pub exclude: Vec<MonthMask>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            val_fraction: 0.15,
            test_start_year: 2017,
            regions: None,
            exclude: Vec::new(),
        }
    }
}

impl SplitOptions {
    fn keeps(&self, when: YearMonth, region: &str) -> bool {
        self.regions
            .as_ref()
            .is_none_or(|rs| rs.iter().any(|r| r == region))
            && !self.exclude.iter().any(|m| m.matches(when, region))
    }
}

/// Indices into the input slice, per split.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split assignment for `(month, region)` keys; `None` marks dropped samples.
pub fn assign_splits(
    keys: &[(YearMonth, &str)],
    opts: &SplitOptions,
) -> Result<Vec<Option<Split>>> {
    if !(0.0..1.0).contains(&opts.val_fraction) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction must be in [0, 1), got {}",
            opts.val_fraction
        )));
    }
    let pre_test: BTreeSet<YearMonth> = keys
        .iter()
        .filter(|(when, region)| opts.keeps(*when, region) && when.year < opts.test_start_year)
        .map(|(when, _)| *when)
        .collect();
    let n_val = if opts.val_fraction > 0.0 && !pre_test.is_empty() {
        ((opts.val_fraction * pre_test.len() as f64).round() as usize).max(1)
    } else {
        0
    };
    let val_months: BTreeSet<YearMonth> = pre_test.iter().rev().take(n_val).copied().collect();

    let splits: Vec<Option<Split>> = keys
        .iter()
        .map(|(when, region)| {
            if !opts.keeps(*when, region) {
                None
            } else if when.year >= opts.test_start_year {
                Some(Split::Test)
            } else if val_months.contains(when) {
                Some(Split::Val)
            } else {
                Some(Split::Train)
            }
        })
        .collect();
    if !splits.contains(&Some(Split::Train)) {
        return Err(Error::DataQuality(format!(
            "empty train split: no kept sample before {} leaves room for training",
            opts.test_start_year
        )));
    }
    Ok(splits)
}

/// Partition samples into train/val/test by date (see [`SplitOptions`]).
pub fn split_manifest(samples: &[Sample], opts: &SplitOptions) -> Result<SplitIndices> {
    let keys: Vec<_> = samples
        .iter()
        .map(|s| (s.when, s.region.as_str()))
        .collect();
    let mut out = SplitIndices::default();
    for (i, split) in assign_splits(&keys, opts)?.into_iter().enumerate() {
        match split {
            Some(Split::Train) => out.train.push(i),
            Some(Split::Val) => out.val.push(i),
            Some(Split::Test) => out.test.push(i),
            None => {}
        }
    }
    Ok(out)
}

/// Dataset-level metadata stored next to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub scale: Scale,
    pub normalization: NormalizationSpec,
    #[serde(default)]
    pub degradation: Degradation,
    /// Generator seed for synthetic datasets.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub split: SplitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub year: i32,
    pub month: u32,
    pub region: String,
    pub split: Split,
    pub scale: Scale,
    pub lr_fire: String,
    pub lr_temp_dev: String,
    pub lr_burnable: String,
    pub hr_fire: String,
}

impl ManifestRecord {
    pub fn when(&self) -> YearMonth {
        YearMonth {
            year: self.year,
            month: self.month,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub info: DatasetInfo,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Write rasters, `manifest.jsonl` and `dataset.json` under `dir`.
    /// Samples with a `None` assignment are skipped; records are ordered by
    /// (year, month, region).
    pub fn write(
        dir: impl AsRef<Path>,
        samples: &[Sample],
        assignment: &[Option<Split>],
        info: DatasetInfo,
    ) -> Result<Self> {
        let dir = dir.as_ref();
        if samples.len() != assignment.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} split assignments",
                samples.len(),
                assignment.len()
            )));
        }
        let mut order: Vec<usize> = (0..samples.len())
            .filter(|&i| assignment[i].is_some())
            .collect();
        order.sort_by(|&a, &b| {
            (samples[a].when, &samples[a].region).cmp(&(samples[b].when, &samples[b].region))
        });

        let mut records = Vec::with_capacity(order.len());
        for i in order {
            let s = &samples[i];
            if s.scale != info.scale {
                return Err(Error::Shape(format!(
                    "sample {} has scale {} but dataset scale is {}",
                    s.id, s.scale, info.scale
                )));
            }
            let rel = format!("samples/{}", s.id);
            let sample_dir = dir.join(&rel);
            fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
            let [fire, temp, burn] = s.lr_input.channels() else {
                return Err(Error::Shape(format!(
                    "sample {} does not have 3 channels",
                    s.id
                )));
            };
            let record = ManifestRecord {
                id: s.id.clone(),
                year: s.when.year,
                month: s.when.month,
                region: s.region.clone(),
                split: assignment[i].unwrap(),
                scale: s.scale,
                lr_fire: format!("{rel}/lr_fire.fsr"),
                lr_temp_dev: format!("{rel}/lr_temp_dev.fsr"),
                lr_burnable: format!("{rel}/lr_burnable.fsr"),
                hr_fire: format!("{rel}/hr_fire.fsr"),
            };
            write_raster(fire, dir.join(&record.lr_fire))?;
            write_raster(temp, dir.join(&record.lr_temp_dev))?;
            write_raster(burn, dir.join(&record.lr_burnable))?;
            write_raster(&s.hr_target, dir.join(&record.hr_fire))?;
            records.push(record);
        }

        let manifest = Self {
            root: dir.to_path_buf(),
            info,
            records,
        };
        manifest.validate()?;
        manifest.save()?;
        Ok(manifest)
    }

    /// Rewrite `manifest.jsonl` and `dataset.json` (rasters untouched).
    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        let info_path = self.root.join(DATASET_INFO_FILE);
        let mut f = fs::File::create(&info_path).map_err(|e| Error::io(&info_path, e))?;
        serde_json::to_writer_pretty(&mut f, &self.info)?;
        f.write_all(b"\n").map_err(|e| Error::io(&info_path, e))
    }

    /// Open a dataset from its directory or its `manifest.jsonl`.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (root, manifest_path) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            (root, path.to_path_buf())
        };
        let info_path = root.join(DATASET_INFO_FILE);
        let info_text = fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
        let info: DatasetInfo = serde_json::from_str(&info_text)
            .map_err(|e| Error::Format(format!("{}: {e}", info_path.display())))?;

        let f = fs::File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&manifest_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
                Error::Format(format!("{}:{}: {e}", manifest_path.display(), n + 1))
            })?;
            records.push(rec);
        }
        let manifest = Self {
            root,
            info,
            records,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Ids are unique, every record carries the dataset scale and dates agree
    /// with the temporal split.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let cut = self.info.split.test_start_year;
        for r in &self.records {
            if !seen.insert(&r.id) {
                return Err(Error::DataQuality(format!(
                    "sample id {} appears twice",
                    r.id
                )));
            }
            if r.scale != self.info.scale {
                return Err(Error::Shape(format!(
                    "record {} has scale {} but dataset scale is {}",
                    r.id, r.scale, self.info.scale
                )));
            }
            let ok = match r.split {
                Split::Test => r.year >= cut,
                Split::Train | Split::Val => r.year < cut,
            };
            if !ok {
                return Err(Error::DataQuality(format!(
                    "record {} dated {} cannot be in split {} (test starts {cut})",
                    r.id,
                    r.when(),
                    r.split.as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.records_in(split).count()
    }

    /// Keep only records from `regions`.
    pub fn filter_regions(&self, regions: &[String]) -> Self {
        Self {
            root: self.root.clone(),
            info: self.info.clone(),
            records: self
                .records
                .iter()
                .filter(|r| regions.contains(&r.region))
                .cloned()
                .collect(),
        }
    }

    pub fn regions(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.region.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn load_sample(&self, r: &ManifestRecord) -> Result<Sample> {
        let lr = ChannelStack::fire_temp_burnable(
            read_raster(self.root.join(&r.lr_fire))?,
            read_raster(self.root.join(&r.lr_temp_dev))?,
            read_raster(self.root.join(&r.lr_burnable))?,
        )?;
        let sample = Sample {
            id: r.id.clone(),
            lr_input: lr,
            hr_target: read_raster(self.root.join(&r.hr_fire))?,
            when: YearMonth::new(r.year, r.month)?,
            region: r.region.clone(),
            scale: r.scale,
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Load every sample of `split`, in manifest order.
    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        let records: Vec<_> = self.records_in(split).collect();
        records.par_iter().map(|r| self.load_sample(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ym(y: i32, m: u32) -> YearMonth {
        YearMonth::new(y, m).unwrap()
    }

    fn monthly(regions: &[&'static str], from: i32, to: i32) -> Vec<(YearMonth, &'static str)> {
        let mut keys = Vec::new();
        for y in from..=to {
            for m in 1..=12 {
                for r in regions {
                    keys.push((ym(y, m), *r));
                }
            }
        }
        keys
    }

    #[test]
    fn test_years_go_to_test() {
        let mut keys = monthly(&["US"], 2014, 2016);
        keys.push((ym(2018, 8), "US"));
        let s = assign_splits(&keys, &SplitOptions::default()).unwrap();
        assert_eq!(*s.last().unwrap(), Some(Split::Test));
    }

    #[test]
    fn zero_val_fraction_is_all_train() {
        let keys = vec![(ym(2005, 1), "US")];
        let opts = SplitOptions {
            val_fraction: 0.0,
            ..Default::default()
        };
        assert_eq!(
            assign_splits(&keys, &opts).unwrap(),
            vec![Some(Split::Train)]
        );
    }

    #[test]
    fn val_is_chronological_tail() {
        let keys = monthly(&["US", "AUS"], 2007, 2016);
        let s = assign_splits(&keys, &SplitOptions::default()).unwrap();
        // 120 months, 15% -> 18 months, both regions
        let val: Vec<_> = keys
            .iter()
            .zip(&s)
            .filter(|(_, s)| **s == Some(Split::Val))
            .map(|(k, _)| k.0)
            .collect();
        assert_eq!(val.len(), 36);
        assert_eq!(*val.iter().min().unwrap(), ym(2015, 7));
        let last_train = keys
            .iter()
            .zip(&s)
            .filter(|(_, s)| **s == Some(Split::Train))
            .map(|(k, _)| k.0)
            .max()
            .unwrap();
        assert!(last_train < ym(2015, 7));
    }

    #[test]
    fn region_filter_drops_other_regions() {
        let keys = monthly(&["US", "AUS"], 2012, 2018);
        let opts = SplitOptions {
            regions: Some(vec!["US".into()]),
            ..Default::default()
        };
        let s = assign_splits(&keys, &opts).unwrap();
        for (k, s) in keys.iter().zip(&s) {
            assert_eq!(s.is_some(), k.1 == "US");
        }
    }

    #[test]
    fn month_masks_exclude() {
        let keys = monthly(&["US", "AUS"], 2015, 2020);
        let opts = SplitOptions {
            exclude: vec![
                MonthMask {
                    region: Some("US".into()),
                    year: 2020,
                    months: vec![3, 4, 5, 6, 7],
                },
                MonthMask {
                    region: Some("AUS".into()),
                    year: 2020,
                    months: vec![3, 4, 5],
                },
            ],
            ..Default::default()
        };
        let s = assign_splits(&keys, &opts).unwrap();
        let dropped: Vec<_> = keys.iter().zip(&s).filter(|(_, s)| s.is_none()).collect();
        assert_eq!(dropped.len(), 8);
    }

    #[test]
    fn empty_train_is_an_error() {
        let keys = vec![(ym(2018, 1), "US")];
        assert!(assign_splits(&keys, &SplitOptions::default()).is_err());
        let bad = SplitOptions {
            val_fraction: 1.5,
            ..Default::default()
        };
        assert!(assign_splits(&monthly(&["US"], 2010, 2010), &bad).is_err());
    }

    #[test]
    fn splits_never_overlap_in_time() {
        let keys = monthly(&["US", "AUS"], 2000, 2020);
        let s = assign_splits(&keys, &SplitOptions::default()).unwrap();
        let max_trainval = keys
            .iter()
            .zip(&s)
            .filter(|(_, s)| matches!(s, Some(Split::Train | Split::Val)))
            .map(|(k, _)| k.0.year)
            .max()
            .unwrap();
        let min_test = keys
            .iter()
            .zip(&s)
            .filter(|(_, s)| **s == Some(Split::Test))
            .map(|(k, _)| k.0.year)
            .min()
            .unwrap();
        assert_eq!((max_trainval, min_test), (2016, 2017));
    }
}
