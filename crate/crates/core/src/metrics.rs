//! Zero-shot relative depth evaluation: align each prediction to its ground
//! truth, then score AbsRel, the delta thresholds, RMSE, RMSE-log and log10
//! in depth units.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::alignment::{lsq_from_samples, robust_from_samples, AlignmentMethod, AlignmentParams};
use crate::map::{check_dims, DepthMap};
use crate::{Error, Result};

/// Space in which the scale/shift fit is performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignSpace {
    #[default]
    #[serde(alias = "inv")]
    InverseDepth,
    Depth,
}

impl AlignSpace {
    pub fn label(self) -> &'static str {
        match self {
            AlignSpace::InverseDepth => "inv",
            AlignSpace::Depth => "depth",
        }
    }
}

/// How per-image numbers become dataset numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Unweighted mean of per-image rows.
    #[default]
    PerImage,
    /// Every valid pixel weighted equally across the dataset.
    PixelPooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub alignment: AlignmentMethod,
    pub space: AlignSpace,
    pub delta_base: f64,
    pub min_depth: Option<f64>,
    pub max_depth: Option<f64>,
    pub pooling: Pooling,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alignment: AlignmentMethod::LeastSquares,
            space: AlignSpace::InverseDepth,
            delta_base: 1.25,
            min_depth: None,
            max_depth: None,
            pooling: Pooling::PerImage,
        }
    }
}

impl EvalConfig {
    /// Street-scene preset: depth capped at 80 m.
    pub fn street_profile() -> Self {
        Self {
            min_depth: Some(1e-3),
            max_depth: Some(80.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_base > 1.0 && self.delta_base.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta_base must be > 1, got {}",
                self.delta_base
            )));
        }
        if let (Some(lo), Some(hi)) = (self.min_depth, self.max_depth) {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!("min_depth {lo} must be < max_depth {hi}")));
            }
        }
        Ok(())
    }

    pub fn protocol_line(&self) -> String {
        format!(
            "alignment={} space={} delta_base={} pooling={} clamp=[{}, {}]",
            self.alignment.label(),
            self.space.label(),
            self.delta_base,
            match self.pooling {
                Pooling::PerImage => "per-image",
                Pooling::PixelPooled => "pixel",
            },
            self.min_depth.map_or_else(|| String::from("-"), |v| format!("{v}")),
            self.max_depth.map_or_else(|| String::from("-"), |v| format!("{v}")),
        )
    }
}

/// The error metrics of one aligned prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthErrors {
    pub abs_rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
}

/// Metrics over paired positive depths. Both slices must be non-empty and of
/// equal length.
pub fn depth_errors(pred: &[f64], gt: &[f64], delta_base: f64) -> DepthErrors {
    debug_assert_eq!(pred.len(), gt.len());
    let n = pred.len() as f64;
    let thresholds = [
        delta_base,
        delta_base * delta_base,
        delta_base * delta_base * delta_base,
    ];
    let mut e = DepthErrors::default();
    let mut within = [0usize; 3];
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    for (&p, &g) in pred.iter().zip(gt) {
        e.abs_rel += libm::fabs(p - g) / g;
        let ratio = if p > g { p / g } else { g / p };
        for (k, &th) in thresholds.iter().enumerate() {
            if ratio < th {
                within[k] += 1;
            }
        }
        sq += (p - g) * (p - g);
        let dl = libm::log(p) - libm::log(g);
        sq_log += dl * dl;
        e.log10 += libm::fabs(libm::log10(p) - libm::log10(g));
    }
    e.abs_rel /= n;
    e.delta1 = within[0] as f64 / n;
    e.delta2 = within[1] as f64 / n;
    e.delta3 = within[2] as f64 / n;
    e.rmse = libm::sqrt(sq / n);
    e.rmse_log = libm::sqrt(sq_log / n);
    e.log10 /= n;
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: String,
    #[serde(flatten)]
    pub errors: DepthErrors,
    pub valid_pixels: usize,
    /// Aligned values that were non-positive and got clamped.
    pub clamped_pixels: usize,
    pub params: AlignmentParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub images_evaluated: usize,
    pub images_skipped: usize,
    pub clamped_pixels: usize,
    pub per_image: Vec<ImageRow>,
    pub skipped: Vec<SkippedImage>,
}

impl MetricReport {
    pub fn errors(&self) -> DepthErrors {
        DepthErrors {
            abs_rel: self.abs_rel,
            delta1: self.delta1,
            delta2: self.delta2,
            delta3: self.delta3,
            rmse: self.rmse,
            rmse_log: self.rmse_log,
            log10: self.log10,
        }
    }
}

/// Aligns `pred` to `gt` per `cfg` and scores it.
pub fn evaluate_image(image_id: &str, pred: &DepthMap, gt: &DepthMap, cfg: &EvalConfig) -> Result<ImageRow> {
    cfg.validate()?;
    check_dims(gt.dims(), pred.dims())?;
    let mut gt_depth = Vec::new();
    let mut pred_vals = Vec::new();
    for i in 0..gt.len() {
        let Some(d) = gt.depth_at(i) else { continue };
        if !(d > 0.0 && d.is_finite()) {
            continue;
        }
        if cfg.min_depth.is_some_and(|lo| d < lo) || cfg.max_depth.is_some_and(|hi| d > hi) {
            continue;
        }
        let p = match cfg.space {
            AlignSpace::InverseDepth => pred.inverse_at(i),
            AlignSpace::Depth => pred.depth_at(i),
        };
        if let Some(p) = p.filter(|p| p.is_finite()) {
            gt_depth.push(d);
            pred_vals.push(p);
        }
    }
    let target: Vec<f64> = match cfg.space {
        AlignSpace::InverseDepth => gt_depth.iter().map(|d| 1.0 / d).collect(),
        AlignSpace::Depth => gt_depth.clone(),
    };
    let params = match cfg.alignment {
        AlignmentMethod::LeastSquares => lsq_from_samples(&pred_vals, &target)?,
        AlignmentMethod::Robust => robust_from_samples(&pred_vals, &target)?,
    };
    let floor = target
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min)
        * 1e-3;
    let mut clamped = 0;
    let aligned_depth: Vec<f64> = pred_vals
        .iter()
        .map(|&p| {
            let mut a = params.apply(p);
            if !(a > 0.0) || !a.is_finite() {
                a = floor;
                clamped += 1;
            }
            match cfg.space {
                AlignSpace::InverseDepth => 1.0 / a,
                AlignSpace::Depth => a,
            }
        })
        .collect();
    Ok(ImageRow {
        image_id: String::from(image_id),
        errors: depth_errors(&aligned_depth, &gt_depth, cfg.delta_base),
        valid_pixels: gt_depth.len(),
        clamped_pixels: clamped,
        params,
    })
}

/// Folds per-image rows into a dataset report. Rows are summed in `image_id`
/// order, so the result does not depend on input order.
pub fn aggregate(mut rows: Vec<ImageRow>, mut skipped: Vec<SkippedImage>, pooling: Pooling) -> MetricReport {
    rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    skipped.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let weight = |r: &ImageRow| match pooling {
        Pooling::PerImage => 1.0,
        Pooling::PixelPooled => r.valid_pixels as f64,
    };
    let total: f64 = rows.iter().map(weight).sum();
    let mut acc = DepthErrors::default();
    let (mut sq, mut sq_log) = (0.0, 0.0);
    for r in &rows {
        let w = weight(r);
        acc.abs_rel += w * r.errors.abs_rel;
        acc.delta1 += w * r.errors.delta1;
        acc.delta2 += w * r.errors.delta2;
        acc.delta3 += w * r.errors.delta3;
        acc.log10 += w * r.errors.log10;
        match pooling {
            Pooling::PerImage => {
                acc.rmse += r.errors.rmse;
                acc.rmse_log += r.errors.rmse_log;
            }
            Pooling::PixelPooled => {
                sq += w * r.errors.rmse * r.errors.rmse;
                sq_log += w * r.errors.rmse_log * r.errors.rmse_log;
            }
        }
    }
    if total > 0.0 {
        acc.abs_rel /= total;
        acc.delta1 /= total;
        acc.delta2 /= total;
        acc.delta3 /= total;
        acc.log10 /= total;
        match pooling {
            Pooling::PerImage => {
                acc.rmse /= total;
                acc.rmse_log /= total;
            }
            Pooling::PixelPooled => {
                acc.rmse = libm::sqrt(sq / total);
                acc.rmse_log = libm::sqrt(sq_log / total);
            }
        }
    }
    MetricReport {
        abs_rel: acc.abs_rel,
        delta1: acc.delta1,
        delta2: acc.delta2,
        delta3: acc.delta3,
        rmse: acc.rmse,
        rmse_log: acc.rmse_log,
        log10: acc.log10,
        images_evaluated: rows.len(),
        images_skipped: skipped.len(),
        clamped_pixels: rows.iter().map(|r| r.clamped_pixels).sum(),
        per_image: rows,
        skipped,
    }
}

/// Evaluates `(image_id, pred, gt)` triples; fits that degenerate are
/// recorded as skipped rather than failing the run.
pub fn evaluate_all<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a DepthMap, &'a DepthMap)>,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, pred, gt) in items {
        match row_or_skip(id, pred, gt, cfg)? {
            Ok(row) => rows.push(row),
            Err(s) => skipped.push(s),
        }
    }
    Ok(aggregate(rows, skipped, cfg.pooling))
}

/// `Ok(Ok(row))` on success, `Ok(Err(skip))` for a degenerate fit, `Err` for
/// anything else.
pub fn row_or_skip(
    image_id: &str,
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &EvalConfig,
) -> Result<core::result::Result<ImageRow, SkippedImage>> {
    match evaluate_image(image_id, pred, gt, cfg) {
        Ok(row) => Ok(Ok(row)),
        Err(Error::DegenerateFit(why)) => Ok(Err(SkippedImage {
            image_id: String::from(image_id),
            reason: String::from(why),
        })),
        Err(e) => Err(e),
    }
}

/// Per-metric differences `b - a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelComparison {
    pub a: MetricReport,
    pub b: MetricReport,
    pub delta: DepthErrors,
}

pub fn compare_reports(a: MetricReport, b: MetricReport) -> LabelComparison {
    let (ea, eb) = (a.errors(), b.errors());
    let delta = DepthErrors {
        abs_rel: eb.abs_rel - ea.abs_rel,
        delta1: eb.delta1 - ea.delta1,
        delta2: eb.delta2 - ea.delta2,
        delta3: eb.delta3 - ea.delta3,
        rmse: eb.rmse - ea.rmse,
        rmse_log: eb.rmse_log - ea.rmse_log,
        log10: eb.log10 - ea.log10,
    };
    LabelComparison { a, b, delta }
}
