//! Run configuration: a JSON file mirroring these structs, overridden by
//! command-line flags. The merged result is echoed into the output
//! directory as `run_config.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use firesr::dataset::{ClimatologyWindow, NormalizationSpec, SplitOptions, YearMonth};
use firesr::evaluation::{CoarseOptions, Pooling, DEFAULT_THRESHOLD};
use firesr::model::FilterExportMode;
use firesr::raster::Degradation;
use firesr::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub months: usize,
    pub width: usize,
    pub height: usize,
    pub start: YearMonth,
    pub regions: Vec<String>,
    pub blob_density: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            months: 60,
            width: 128,
            height: 64,
            start: YearMonth {
                year: 2013,
                month: 1,
            },
            regions: vec!["SYN".into()],
            blob_density: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub input: Option<PathBuf>,
    pub degradation: Degradation,
    pub climatology: ClimatologyWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Also write `checkpoint.fsc` holding the final optimizer state.
    pub checkpoint: bool,
    pub params: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub dataset: Option<PathBuf>,
    pub weights: Vec<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub by_region: bool,
    pub pooling: Pooling,
    /// Sample ids to render as target | FireSRnet | bicubic strips.
    pub triptych: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InferSection {
    pub weights: Option<PathBuf>,
    /// Normalized LR channels on one grid.
    pub lr_fire: Option<PathBuf>,
    pub lr_temp_dev: Option<PathBuf>,
    pub lr_burnable: Option<PathBuf>,
    /// Coarse climate-model fields, regridded to `lr_dims` first.
    pub coarse_fire: Option<PathBuf>,
    pub coarse_temp_dev: Option<PathBuf>,
    pub burnable: Option<PathBuf>,
    pub lr_dims: Option<(usize, usize)>,
    pub coarse: CoarseOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FiltersSection {
    pub weights: Option<PathBuf>,
    pub mode: FilterExportMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the generator and training; overrides `train.params.seed`.
    pub seed: u64,
    /// Taken from the dataset when unset.
    pub scale: Option<u32>,
    pub threshold: f64,
    pub threads: Option<usize>,
    /// Not echoed: the output location does not affect results.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub normalization: NormalizationSpec,
    pub split: SplitOptions,
    pub synth: SynthSection,
    pub build: BuildSection,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
    pub infer: InferSection,
    pub export_filters: FiltersSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: None,
            threshold: DEFAULT_THRESHOLD,
            threads: None,
            out: None,
            normalization: NormalizationSpec::default(),
            split: SplitOptions::default(),
            synth: SynthSection::default(),
            build: BuildSection::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
            infer: InferSection::default(),
            export_filters: FiltersSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Core(firesr::Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("an output directory is required (--out)".into()))
    }

    /// Canonical JSON of the effective configuration.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
