//! Error and classification metrics, the bicubic baseline, report
//! tables and inference on coarse inputs.

mod coarse;
mod metrics;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Sample, Split};
use crate::error::{Error, Result};
use crate::model::NetworkWeights;
use crate::raster::{bicubic_resample, Raster};
use crate::scale::Scale;

pub use coarse::{infer_coarse, CoarseInference, CoarseOptions};
pub use metrics::{
    binarize, classification_metrics, confusion, continuous_metrics, BinaryFireMap,
    ClassificationMetrics, ConfusionCounts, ContinuousMetrics,
};
pub use report::{
    format_table, report_footer, reports_to_csv, triptych, write_report_csv, write_triptych,
};

/// Half of one fire count in normalized units.
pub const DEFAULT_THRESHOLD: f64 = 0.5 / 254.0;

pub const MODEL_NAME: &str = "FireSRnet";
pub const BASELINE_NAME: &str = "Bicubic";

/// How per-pixel results are combined across test images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One confusion matrix and one squared-error sum over every pixel.
    #[default]
    Pooled,
    /// Metrics per image, then the unweighted mean over images. R2 is
    /// averaged over the images where it is defined.
    PerImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub threshold: f64,
    pub pooling: Pooling,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            pooling: Pooling::Pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub scale: Scale,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub precision: f64,
    pub f1: f64,
    pub threat_score: f64,
    pub n_pixels: u64,
    pub threshold: f64,
    #[serde(default)]
    pub pooling: Pooling,
}

/// Pooled metrics of `preds` against `targets`, binarizing both at
/// `threshold`.
pub fn evaluate_predictions(
    model_name: &str,
    scale: Scale,
    preds: &[Raster],
    targets: &[Raster],
    threshold: f64,
) -> Result<EvalReport> {
    evaluate_predictions_with(
        model_name,
        scale,
        preds,
        targets,
        EvalOptions {
            threshold,
            pooling: Pooling::Pooled,
        },
    )
}

pub fn evaluate_predictions_with(
    model_name: &str,
    scale: Scale,
    preds: &[Raster],
    targets: &[Raster],
    opts: EvalOptions,
) -> Result<EvalReport> {
    metrics::check_threshold(opts.threshold)?;
    let cont = continuous_metrics(preds, targets)?;
    let counts = |p: &Raster, t: &Raster| {
        confusion(&binarize(p, opts.threshold)?, &binarize(t, opts.threshold)?)
    };
    let (rmse, r2, cls) = match opts.pooling {
        Pooling::Pooled => {
            let mut total = ConfusionCounts::default();
            for (p, t) in preds.iter().zip(targets) {
                total.merge(&counts(p, t)?);
            }
            (cont.rmse, cont.r2, total.metrics())
        }
        Pooling::PerImage => {
            let n = preds.len() as f64;
            let mut rmse = 0.0;
            let mut r2 = Vec::new();
            let mut cls = ClassificationMetrics {
                precision: 0.0,
                f1: 0.0,
                threat_score: 0.0,
            };
            for (p, t) in preds.iter().zip(targets) {
                let c = continuous_metrics(std::slice::from_ref(p), std::slice::from_ref(t))?;
                rmse += c.rmse / n;
                r2.extend(c.r2);
                let m = counts(p, t)?.metrics();
                cls.precision += m.precision / n;
                cls.f1 += m.f1 / n;
                cls.threat_score += m.threat_score / n;
            }
            let r2 = (!r2.is_empty()).then(|| r2.iter().sum::<f64>() / r2.len() as f64);
            (rmse, r2, cls)
        }
    };
    Ok(EvalReport {
        model_name: model_name.to_string(),
        scale,
        rmse,
        r2,
        precision: cls.precision,
        f1: cls.f1,
        threat_score: cls.threat_score,
        n_pixels: cont.n_pixels,
        threshold: opts.threshold,
        pooling: opts.pooling,
    })
}

/// Bicubic upsampling of the LR fire channel alone.
pub fn bicubic_baseline(fire_lr: &Raster, scale: Scale) -> Result<Raster> {
    let f = scale.factor();
    let up = bicubic_resample(fire_lr, fire_lr.width() * f, fire_lr.height() * f)?;
    Ok(up.with_geo(fire_lr.geo().scaled(1.0 / f as f64)))
}

/// Network and baseline predictions for every sample, in input order.
pub fn predict_samples(
    net: &NetworkWeights,
    samples: &[Sample],
) -> Result<(Vec<Raster>, Vec<Raster>)> {
    if let Some(s) = samples.iter().find(|s| s.scale != net.scale) {
        return Err(Error::Shape(format!(
            "network is {} but sample {} is {}",
            net.scale, s.id, s.scale
        )));
    }
    let pairs: Vec<(Raster, Raster)> = samples
        .par_iter()
        .map(|s| {
            Ok((
                net.forward(&s.lr_input)?,
                bicubic_baseline(s.fire_lr(), s.scale)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// FireSRnet and bicubic rows for one network over `samples`.
pub fn evaluate_samples(
    net: &NetworkWeights,
    samples: &[Sample],
    opts: EvalOptions,
    label: Option<&str>,
) -> Result<[EvalReport; 2]> {
    if samples.is_empty() {
        return Err(Error::DataQuality("no test samples to evaluate".into()));
    }
    let (sr, bic) = predict_samples(net, samples)?;
    let targets: Vec<Raster> = samples.iter().map(|s| s.hr_target.clone()).collect();
    let name = |base: &str| match label {
        Some(l) => format!("{base}-{} ({l})", net.scale),
        None => format!("{base}-{}", net.scale),
    };
    Ok([
        evaluate_predictions_with(&name(MODEL_NAME), net.scale, &sr, &targets, opts)?,
        evaluate_predictions_with(&name(BASELINE_NAME), net.scale, &bic, &targets, opts)?,
    ])
}

/// For every network, a FireSRnet row followed by its bicubic row, both on
/// the manifest's test split.
pub fn evaluate_models(
    manifest: &DatasetManifest,
    nets: &[NetworkWeights],
    opts: EvalOptions,
) -> Result<Vec<EvalReport>> {
    metrics::check_threshold(opts.threshold)?;
    for net in nets {
        if net.scale != manifest.info.scale {
            return Err(Error::Shape(format!(
                "network is {} but the dataset is {}",
                net.scale, manifest.info.scale
            )));
        }
    }
    let test = manifest.load_split(Split::Test)?;
    let mut rows = Vec::with_capacity(2 * nets.len());
    for net in nets {
        rows.extend(evaluate_samples(net, &test, opts, None)?);
    }
    Ok(rows)
}

/// Rows per region subset: each region alone, then all regions combined.
/// Labels read "US only", "AUS only", "US and AUS combined".
pub fn evaluate_regions(
    manifest: &DatasetManifest,
    net: &NetworkWeights,
    opts: EvalOptions,
) -> Result<Vec<EvalReport>> {
    let regions = manifest.regions();
    let mut subsets: Vec<(String, Vec<String>)> = regions
        .iter()
        .map(|r| (format!("{r} only"), vec![r.clone()]))
        .collect();
    if regions.len() > 1 {
        subsets.push((
            format!("{} combined", regions.join(" and ")),
            regions.clone(),
        ));
    }
    let mut rows = Vec::new();
    for (label, set) in subsets {
        let test = manifest.filter_regions(&set).load_split(Split::Test)?;
        rows.extend(evaluate_samples(net, &test, opts, Some(&label))?);
    }
    Ok(rows)
}
