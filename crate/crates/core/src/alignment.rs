//! Scale-and-shift alignment of a prediction onto a reference.
//!
//! Both fits operate on the raw stored values of the two maps; callers pick
//! the space (inverse depth or depth) by converting the maps first.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::map::{check_dims, DepthMap, ValidMask};
use crate::stats::{mean_abs_dev, median};
use crate::{Error, Result};

/// `aligned = scale * pred + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub scale: f64,
    pub shift: f64,
}

impl AlignmentParams {
    pub const IDENTITY: AlignmentParams = AlignmentParams { scale: 1.0, shift: 0.0 };

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        self.scale * v + self.shift
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMethod {
    #[default]
    #[serde(alias = "lsq")]
    LeastSquares,
    Robust,
}

impl AlignmentMethod {
    pub fn fit(self, pred: &DepthMap, reference: &DepthMap, mask: &ValidMask) -> Result<AlignmentParams> {
        match self {
            AlignmentMethod::LeastSquares => fit_scale_shift_lsq(pred, reference, mask),
            AlignmentMethod::Robust => fit_scale_shift_robust(pred, reference, mask),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AlignmentMethod::LeastSquares => "lsq",
            AlignmentMethod::Robust => "robust",
        }
    }
}

/// Paired samples where `pred`, `reference` and `mask` are all valid.
pub(crate) fn paired_samples(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(pred.dims(), reference.dims())?;
    check_dims(pred.dims(), mask.dims())?;
    let mut p = Vec::new();
    let mut r = Vec::new();
    for i in mask.indices() {
        if let (Some(a), Some(b)) = (pred.get(i), reference.get(i)) {
            p.push(f64::from(a));
            r.push(f64::from(b));
        }
    }
    Ok((p, r))
}

/// Closed-form minimiser of `sum (s * pred + t - ref)^2` over the jointly
/// valid pixels.
///
/// Sums are accumulated in `f64` about the sample means, which is the
/// 2x2 normal-equation solution without the cancellation of the raw moments.
pub fn fit_scale_shift_lsq(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask) -> Result<AlignmentParams> {
    let (p, r) = paired_samples(pred, reference, mask)?;
    lsq_from_samples(&p, &r)
}

pub(crate) fn lsq_from_samples(p: &[f64], r: &[f64]) -> Result<AlignmentParams> {
    let n = p.len();
    if n < 2 {
        return Err(Error::DegenerateFit("fewer than 2 valid pixels"));
    }
    if p.iter().all(|&v| v == p[0]) {
        return Err(Error::DegenerateFit("prediction is constant over valid pixels"));
    }
    let nf = n as f64;
    let p_mean = p.iter().sum::<f64>() / nf;
    let r_mean = r.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&a, &b) in p.iter().zip(r) {
        let da = a - p_mean;
        cov += da * (b - r_mean);
        var += da * da;
    }
    if !(var > 0.0) {
        return Err(Error::DegenerateFit("prediction is constant over valid pixels"));
    }
    let scale = cov / var;
    let shift = r_mean - scale * p_mean;
    if !scale.is_finite() || !shift.is_finite() {
        return Err(Error::DegenerateFit("non-finite solution"));
    }
    Ok(AlignmentParams { scale, shift })
}

/// Median / mean-absolute-deviation matching:
/// `s = mad(ref) / mad(pred)`, `t = median(ref) - s * median(pred)`.
pub fn fit_scale_shift_robust(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask) -> Result<AlignmentParams> {
    let (p, r) = paired_samples(pred, reference, mask)?;
    robust_from_samples(&p, &r)
}

pub(crate) fn robust_from_samples(p: &[f64], r: &[f64]) -> Result<AlignmentParams> {
    if p.len() < 2 {
        return Err(Error::DegenerateFit("fewer than 2 valid pixels"));
    }
    let p_med = median(p).expect("non-empty");
    let r_med = median(r).expect("non-empty");
    let p_mad = mean_abs_dev(p, p_med);
    if !(p_mad > 0.0) {
        return Err(Error::DegenerateFit("prediction has zero mean absolute deviation"));
    }
    let scale = mean_abs_dev(r, r_med) / p_mad;
    let shift = r_med - scale * p_med;
    if !scale.is_finite() || !shift.is_finite() {
        return Err(Error::DegenerateFit("non-finite solution"));
    }
    Ok(AlignmentParams { scale, shift })
}

/// `scale * pred + shift` at every valid pixel; the mask is kept as is.
pub fn align(pred: &DepthMap, params: AlignmentParams) -> DepthMap {
    let values = pred
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if pred.is_valid(i) {
                params.apply(f64::from(v)) as f32
            } else {
                v
            }
        })
        .collect();
    DepthMap::from_parts_unchecked(pred.width(), pred.height(), values, pred.kind(), pred.mask().clone())
}

/// Sum of squared residuals of `params` over the jointly valid pixels.
pub fn sse(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask, params: AlignmentParams) -> Result<f64> {
    let (p, r) = paired_samples(pred, reference, mask)?;
    Ok(p.iter()
        .zip(&r)
        .map(|(&a, &b)| {
            let e = params.apply(a) - b;
            e * e
        })
        .sum())
}
