//! Training objectives evaluated as plain scores (no gradients).
//!
//! Both depth losses compare median/MAD-normalised maps, so they are
//! invariant to any positive affine change of either input. The gradient
//! term is computed on the normalised residual over a pyramid of `K`
//! average-pooled scales.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::map::{check_dims, DepthMap, ValidMask};
use crate::stats::normalize_over;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub ssi_weight: f64,
    pub gm_weight: f64,
    pub gm_scales: usize,
    /// Fraction of the largest SSI residuals left out of the mean.
    pub trim_fraction: f64,
    /// Cosine similarity at or above which a feature position costs nothing.
    pub feat_align_margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            ssi_weight: 1.0,
            gm_weight: 2.0,
            gm_scales: 4,
            trim_fraction: 0.0,
            feat_align_margin: 0.85,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ssi_weight >= 0.0 && self.ssi_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ssi_weight must be >= 0, got {}",
                self.ssi_weight
            )));
        }
        if !(self.gm_weight >= 0.0 && self.gm_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gm_weight must be >= 0, got {}",
                self.gm_weight
            )));
        }
        if self.gm_scales == 0 || self.gm_scales > 16 {
            return Err(Error::InvalidConfig(format!(
                "gm_scales must be in 1..=16, got {}",
                self.gm_scales
            )));
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(Error::InvalidConfig(format!(
                "trim_fraction must be in [0, 1), got {}",
                self.trim_fraction
            )));
        }
        if !(-1.0..=1.0).contains(&self.feat_align_margin) {
            return Err(Error::InvalidConfig(format!(
                "feat_align_margin must be in [-1, 1], got {}",
                self.feat_align_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub ssi: f64,
    pub gm_per_scale: Vec<f64>,
    pub gm: f64,
    pub total: f64,
    /// Untrimmed `|norm(pred) - norm(ref)|`, zero at invalid pixels.
    #[serde(skip)]
    pub per_pixel: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsiOutput {
    pub loss: f64,
    pub per_pixel: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutput {
    pub loss: f64,
    pub per_scale: Vec<f64>,
}

/// Joint validity of prediction, reference and the extra mask.
pub fn joint_mask(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask) -> Result<ValidMask> {
    check_dims(pred.dims(), reference.dims())?;
    pred.mask().and(reference.mask())?.and(mask)
}

/// Normalised residual `norm(pred) - norm(ref)` and the mask it lives on.
fn normalized_residual(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask) -> Result<(Vec<f64>, ValidMask)> {
    let joint = joint_mask(pred, reference, mask)?;
    if joint.count() < 2 {
        return Err(Error::DegenerateFit("fewer than 2 valid pixels"));
    }
    let np = normalize_over(pred, &joint)?;
    let nr = normalize_over(reference, &joint)?;
    let residual = np.iter().zip(&nr).map(|(a, b)| a - b).collect();
    Ok((residual, joint))
}

pub fn ssi_loss(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask, cfg: &LossConfig) -> Result<SsiOutput> {
    cfg.validate()?;
    let (residual, joint) = normalized_residual(pred, reference, mask)?;
    let per_pixel: Vec<f64> = residual.iter().map(|r| libm::fabs(*r)).collect();
    let mut kept: Vec<f64> = joint.indices().map(|i| per_pixel[i]).collect();
    let n = kept.len();
    let trimmed = libm::floor(cfg.trim_fraction * n as f64) as usize;
    if trimmed > 0 {
        kept.sort_unstable_by(f64::total_cmp);
        kept.truncate(n - trimmed);
    }
    let loss = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(SsiOutput { loss, per_pixel })
}

/// Smallest side length that still leaves `scales` levels with sides >= 2.
fn min_side_for(scales: usize) -> usize {
    1usize << scales
}

/// One 2x average-pool step. A coarse pixel is valid when at least half of
/// its fine pixels are, and carries the mean of those valid fine values.
pub fn pool2(values: &[f64], mask: &ValidMask) -> (Vec<f64>, ValidMask) {
    let (w, h) = mask.dims();
    let (cw, ch) = (w / 2, h / 2);
    let mut out = vec![0.0; cw * ch];
    let mut bits = vec![false; cw * ch];
    for cy in 0..ch {
        for cx in 0..cw {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let i = (2 * cy + dy) * w + 2 * cx + dx;
                if mask.get(i) {
                    sum += values[i];
                    count += 1;
                }
            }
            if count >= 2 {
                out[cy * cw + cx] = sum / count as f64;
                bits[cy * cw + cx] = true;
            }
        }
    }
    (out, ValidMask::new(cw, ch, bits).expect("dimensions consistent"))
}

/// Mean over valid pixels of the forward-difference magnitudes, counting a
/// difference only when both of its pixels are valid.
fn gradient_term(values: &[f64], mask: &ValidMask) -> f64 {
    let (w, h) = mask.dims();
    let valid = mask.count();
    if valid == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.get(i) {
                continue;
            }
            if x + 1 < w && mask.get(i + 1) {
                sum += libm::fabs(values[i + 1] - values[i]);
            }
            if y + 1 < h && mask.get(i + w) {
                sum += libm::fabs(values[i + w] - values[i]);
            }
        }
    }
    sum / valid as f64
}

pub fn gradient_matching_loss(
    pred: &DepthMap,
    reference: &DepthMap,
    mask: &ValidMask,
    cfg: &LossConfig,
) -> Result<GradientOutput> {
    cfg.validate()?;
    let (w, h) = pred.dims();
    let need = min_side_for(cfg.gm_scales);
    if w < need || h < need {
        return Err(Error::TooSmallForScales {
            scales: cfg.gm_scales,
            width: w,
            height: h,
            needed_w: need,
            needed_h: need,
        });
    }
    let (mut residual, mut level_mask) = normalized_residual(pred, reference, mask)?;
    let mut per_scale = Vec::with_capacity(cfg.gm_scales);
    for k in 0..cfg.gm_scales {
        if k > 0 {
            let (r, m) = pool2(&residual, &level_mask);
            residual = r;
            level_mask = m;
        }
        per_scale.push(gradient_term(&residual, &level_mask));
    }
    let loss = per_scale.iter().sum();
    Ok(GradientOutput { loss, per_scale })
}

pub fn combined_loss(pred: &DepthMap, reference: &DepthMap, mask: &ValidMask, cfg: &LossConfig) -> Result<LossReport> {
    let ssi = ssi_loss(pred, reference, mask, cfg)?;
    let gm = gradient_matching_loss(pred, reference, mask, cfg)?;
    let total = cfg.ssi_weight * ssi.loss + cfg.gm_weight * gm.loss;
    Ok(LossReport {
        ssi: ssi.loss,
        gm_per_scale: gm.per_scale,
        gm: gm.loss,
        total,
        per_pixel: ssi.per_pixel,
    })
}

/// Row-major `height x width x channels` feature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels || channels == 0 {
            return Err(Error::BadLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn vector(&self, pos: usize) -> &[f32] {
        &self.data[pos * self.channels..(pos + 1) * self.channels]
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (libm::sqrt(na) * libm::sqrt(nb)))
}

/// Mean over positions of `1 - cos(student, teacher)` where the cosine falls
/// below `margin`; positions at or above the margin contribute zero.
pub fn feature_alignment_loss(student: &FeatureMap, teacher: &FeatureMap, margin: f64) -> Result<f64> {
    if student.shape() != teacher.shape() {
        let (sh, sw, _) = student.shape();
        let (th, tw, _) = teacher.shape();
        return Err(Error::ShapeMismatch {
            expected: (sw, sh),
            actual: (tw, th),
        });
    }
    let n = student.positions();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for pos in 0..n {
        let c = cosine(student.vector(pos), teacher.vector(pos)).ok_or(Error::ZeroVector(pos))?;
        if c < margin {
            sum += (1.0 - c).max(0.0);
        }
    }
    Ok(sum / n as f64)
}
