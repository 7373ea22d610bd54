use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Per-pixel fire/no-fire map.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFireMap {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub threshold: f64,
}

impl BinaryFireMap {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// A pixel is fire iff its value exceeds `threshold`.
pub fn binarize(r: &Raster, threshold: f64) -> Result<BinaryFireMap> {
    check_threshold(threshold)?;
    Ok(BinaryFireMap {
        width: r.width(),
        height: r.height(),
        bits: r.values().iter().map(|&v| v > threshold).collect(),
        threshold,
    })
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite and >= 0, got {threshold}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add_pair(&mut self, pred: bool, target: bool) {
        match (pred, target) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, o: &ConfusionCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }

    /// Ratio with the zero-denominator convention: 1 when nothing was
    /// missed, else 0.
    fn ratio(&self, num: u64, den: u64) -> f64 {
        if den == 0 {
            if self.fn_ == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    }

    pub fn metrics(&self) -> ClassificationMetrics {
        ClassificationMetrics {
            precision: self.ratio(self.tp, self.tp + self.fp),
            f1: self.ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            threat_score: self.ratio(self.tp, self.tp + self.fp + self.fn_),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub f1: f64,
    pub threat_score: f64,
}

pub fn confusion(pred: &BinaryFireMap, target: &BinaryFireMap) -> Result<ConfusionCounts> {
    if (pred.width, pred.height) != (target.width, target.height) {
        return Err(Error::Shape(format!(
            "binary maps {}x{} vs {}x{}",
            pred.width, pred.height, target.width, target.height
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits.iter().zip(&target.bits) {
        c.add_pair(p, t);
    }
    Ok(c)
}

/// Precision, F1 and threat score of `pred` against `target`.
pub fn classification_metrics(
    pred: &BinaryFireMap,
    target: &BinaryFireMap,
) -> Result<ClassificationMetrics> {
    Ok(confusion(pred, target)?.metrics())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMetrics {
    pub rmse: f64,
    /// `None` when the pooled target has zero variance.
    pub r2: Option<f64>,
    pub n_pixels: u64,
}

/// Pooled RMSE and R² over every pixel of every pair.
pub fn continuous_metrics(preds: &[Raster], targets: &[Raster]) -> Result<ContinuousMetrics> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut n = 0u64;
    let mut sq = 0.0;
    let mut sum_t = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        if p.dims() != t.dims() {
            return Err(Error::Shape(format!(
                "prediction {:?} vs target {:?}",
                p.dims(),
                t.dims()
            )));
        }
        for (a, b) in p.values().iter().zip(t.values()) {
            sq += (a - b) * (a - b);
            sum_t += b;
        }
        n += p.len() as u64;
    }
    if n == 0 {
        return Err(Error::DataQuality("no pixels to evaluate".into()));
    }
    let mean = sum_t / n as f64;
    let ss_tot: f64 = targets
        .iter()
        .flat_map(|t| t.values())
        .map(|v| (v - mean) * (v - mean))
        .sum();
    Ok(ContinuousMetrics {
        rmse: (sq / n as f64).sqrt(),
        r2: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
        n_pixels: n,
    })
}
