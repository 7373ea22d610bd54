use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EvalReport, Pooling};
use crate::error::{Error, Result};
use crate::raster::{encode_ppm_heat, GeoTransform, Raster};

/// Explanation printed under the table.
pub fn report_footer(pooling: Pooling) -> &'static str {
    match pooling {
        Pooling::Pooled => {
            "Metrics pooled over all test pixels. A pixel counts as fire when its normalized value \
exceeds the threshold. Ratios with an empty denominator score 1 when no fire pixel was missed, \
else 0. R2 is n/a when the target has zero variance."
        }
        Pooling::PerImage => {
            "Metrics computed per test image, then averaged over images. A pixel counts as fire when \
its normalized value exceeds the threshold. Ratios with an empty denominator score 1 when no fire \
pixel was missed, else 0. R2 is averaged over images whose target varies, n/a if none does."
        }
    }
}

fn r2_text(r2: Option<f64>, null: &str) -> String {
    r2.map_or_else(|| null.to_string(), |v| format!("{v:.4}"))
}

/// Aligned plain-text table in the layout of the published comparison.
pub fn format_table(reports: &[EvalReport]) -> String {
    let header = ["Model", "RMSE", "R2", "Precision", "F1", "Threat score"];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            [
                r.model_name.clone(),
                format!("{:.4}", r.rmse),
                r2_text(r.r2, "n/a"),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.f1),
                format!("{:.4}", r.threat_score),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "  {c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(
        &mut out,
        &rule.iter().map(String::as_str).collect::<Vec<_>>(),
    );
    for row in &rows {
        line(
            &mut out,
            &row.iter().map(String::as_str).collect::<Vec<_>>(),
        );
    }
    if let Some(r) = reports.first() {
        let _ = writeln!(
            out,
            "\nthreshold = {}, pixels per model = {}",
            r.threshold, r.n_pixels
        );
        out.push_str(report_footer(r.pooling));
        out.push('\n');
    }
    out
}

/// CSV with columns model, scale, rmse, r2, precision, f1, threat_score,
/// n_pixels, threshold, pooling. A missing R2 is written as `null`.
pub fn reports_to_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("report csv: {e}"));
    w.write_record([
        "model",
        "scale",
        "rmse",
        "r2",
        "precision",
        "f1",
        "threat_score",
        "n_pixels",
        "threshold",
        "pooling",
    ])
    .map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.model_name.clone(),
            r.scale.factor().to_string(),
            r.rmse.to_string(),
            r.r2.map_or_else(|| "null".to_string(), |v| v.to_string()),
            r.precision.to_string(),
            r.f1.to_string(),
            r.threat_score.to_string(),
            r.n_pixels.to_string(),
            r.threshold.to_string(),
            match r.pooling {
                Pooling::Pooled => "pooled",
                Pooling::PerImage => "per_image",
            }
            .to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("report csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_report_csv(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, reports_to_csv(reports)?).map_err(|e| Error::io(path, e))
}

const GAP: usize = 2;
const GAP_VALUE: f64 = -1.0;

/// Target, FireSRnet and bicubic maps side by side, separated by nodata
/// columns.
pub fn triptych(target: &Raster, sr: &Raster, bicubic: &Raster) -> Result<Raster> {
    let (w, h) = target.dims();
    if sr.dims() != (w, h) || bicubic.dims() != (w, h) {
        return Err(Error::Shape(format!(
            "triptych panels {:?}, {:?}, {:?} differ",
            target.dims(),
            sr.dims(),
            bicubic.dims()
        )));
    }
    let tw = 3 * w + 2 * GAP;
    let mut values = vec![GAP_VALUE; tw * h];
    for (p, panel) in [target, sr, bicubic].iter().enumerate() {
        let x0 = p * (w + GAP);
        for y in 0..h {
            values[y * tw + x0..y * tw + x0 + w]
                .copy_from_slice(&panel.values()[y * w..(y + 1) * w]);
        }
    }
    Raster::with_nodata(tw, h, values, GeoTransform::unit(), Some(GAP_VALUE))
}

/// Heat-map PPM of [`triptych`] on a shared scale from 0 to the target max.
pub fn write_triptych(
    target: &Raster,
    sr: &Raster,
    bicubic: &Raster,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let strip = triptych(target, sr, bicubic)?;
    let hi = target.min_max().1.max(f64::MIN_POSITIVE);
    fs::write(path, encode_ppm_heat(&strip, Some((0.0, hi)))).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scale::Scale;

    fn row(name: &str, rmse: f64) -> EvalReport {
        EvalReport {
            model_name: name.into(),
            scale: Scale::X4,
            rmse,
            r2: None,
            precision: 0.5,
            f1: 2.0 / 3.0,
            threat_score: 0.25,
            n_pixels: 64,
            threshold: 0.5 / 254.0,
            pooling: Pooling::Pooled,
        }
    }

    #[test]
    fn table_rows_in_order() {
        let t = format_table(&[row("FireSRnet-4x", 0.04), row("Bicubic-4x", 0.0433)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Model"));
        assert!(lines[2].starts_with("FireSRnet-4x  ") && lines[2].contains("0.0400"));
        assert!(lines[3].starts_with("Bicubic-4x  ") && lines[3].contains("0.0433"));
        assert!(lines[2].contains("n/a") && lines[2].contains("0.6667"));
        assert_eq!(lines[2].len(), lines[3].len());
    }

    #[test]
    fn csv_layout() {
        let csv = reports_to_csv(&[row("Bicubic-4x", 0.5)]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,scale,rmse,r2,precision,f1,threat_score,n_pixels,threshold,pooling"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("Bicubic-4x,4,0.5,null,0.5,"));
        assert!(row.ends_with(",pooled"));
    }

    #[test]
    fn triptych_layout() {
        let a = Raster::filled(2, 2, 1.0, GeoTransform::unit()).unwrap();
        let b = Raster::filled(2, 2, 2.0, GeoTransform::unit()).unwrap();
        let c = Raster::filled(2, 2, 3.0, GeoTransform::unit()).unwrap();
        let t = triptych(&a, &b, &c).unwrap();
        assert_eq!(t.dims(), (10, 2));
        assert_eq!(
            &t.values()[..10],
            &[1.0, 1.0, -1.0, -1.0, 2.0, 2.0, -1.0, -1.0, 3.0, 3.0]
        );
        assert!(triptych(
            &a,
            &b,
            &Raster::filled(1, 2, 0.0, GeoTransform::unit()).unwrap()
        )
        .is_err());
    }
}
