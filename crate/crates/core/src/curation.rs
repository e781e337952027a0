//! Pseudo-label curation: drop the fraction `n` of valid pixels whose loss
//! against a counterpart prediction is largest.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::losses::{joint_mask, ssi_loss, LossConfig};
use crate::map::{check_dims, DepthMap, ValidMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurationLoss {
    /// Per-pixel residual of the median/MAD-normalised maps.
    #[default]
    SsiResidual,
    /// `|teacher - counterpart|` in inverse depth.
    AbsDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    /// Fraction of valid pixels to mask, in `[0, 1)`.
    pub n: f64,
    pub loss_kind: CurationLoss,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            n: 0.10,
            loss_kind: CurationLoss::SsiResidual,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.n) {
            return Err(Error::InvalidConfig(format!("n must be in [0, 1), got {}", self.n)));
        }
        Ok(())
    }

    /// `floor(n * valid)`.
    pub fn masked_count(&self, valid: usize) -> usize {
        libm::floor(self.n * valid as f64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub image_id: String,
    pub pixels_total: usize,
    pub pixels_valid_before: usize,
    pub pixels_masked: usize,
    /// Smallest loss among masked pixels; `None` when nothing was masked.
    pub loss_threshold: Option<f64>,
}

/// Invalidates the `floor(n * valid)` valid pixels with the largest loss.
///
/// Pixels are ranked by loss descending, then by row-major index descending,
/// so among equal losses the lower index is retained. The ranking is a total
/// order, which makes the masked sets nested as `n` grows.
///
/// The returned report has an empty `image_id`.
pub fn mask_top_loss(loss_map: &[f64], mask: &ValidMask, cfg: &CurationConfig) -> Result<(ValidMask, CurationReport)> {
    cfg.validate()?;
    if loss_map.len() != mask.width() * mask.height() {
        return Err(Error::BadLength {
            width: mask.width(),
            height: mask.height(),
            len: loss_map.len(),
        });
    }
    let mut ranked: Vec<usize> = mask.indices().collect();
    let valid = ranked.len();
    let k = cfg.masked_count(valid);
    let mut out = mask.clone();
    let mut threshold = None;
    if k > 0 {
        let order = |a: &usize, b: &usize| loss_map[*b].total_cmp(&loss_map[*a]).then(b.cmp(a));
        if k < valid {
            ranked.select_nth_unstable_by(k - 1, order);
        }
        for &i in &ranked[..k] {
            out.set(i, false);
        }
        threshold = ranked[..k].iter().map(|&i| loss_map[i]).min_by(f64::total_cmp);
    }
    Ok((
        out,
        CurationReport {
            image_id: String::new(),
            pixels_total: loss_map.len(),
            pixels_valid_before: valid,
            pixels_masked: k,
            loss_threshold: threshold,
        },
    ))
}

/// Per-pixel loss between teacher and counterpart on their joint validity
/// (further restricted by `mask`). Zero off the returned mask.
pub fn curation_loss_map(
    teacher: &DepthMap,
    counterpart: &DepthMap,
    mask: &ValidMask,
    kind: CurationLoss,
) -> Result<(Vec<f64>, ValidMask)> {
    check_dims(teacher.dims(), counterpart.dims())?;
    let joint = joint_mask(teacher, counterpart, mask)?;
    let losses = match kind {
        CurationLoss::SsiResidual => ssi_loss(teacher, counterpart, &joint, &LossConfig::default())?.per_pixel,
        CurationLoss::AbsDiff => (0..teacher.len())
            .map(|i| {
                if joint.get(i) {
                    let a = teacher.inverse_at(i).expect("valid");
                    let b = counterpart.inverse_at(i).expect("valid");
                    libm::fabs(a - b)
                } else {
                    0.0
                }
            })
            .collect(),
    };
    Ok((losses, joint))
}

/// Curated training mask for one pseudo-labelled image.
pub fn curate_image(
    image_id: &str,
    teacher: &DepthMap,
    counterpart: &DepthMap,
    mask: &ValidMask,
    cfg: &CurationConfig,
) -> Result<(ValidMask, CurationReport)> {
    let (losses, joint) = curation_loss_map(teacher, counterpart, mask, cfg.loss_kind)?;
    let (curated, mut report) = mask_top_loss(&losses, &joint, cfg)?;
    report.image_id = String::from(image_id);
    Ok((curated, report))
}
