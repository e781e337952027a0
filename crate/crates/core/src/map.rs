//! Dense depth fields and their validity masks.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// What the values of a [`DepthMap`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    /// Affine-invariant inverse depth (disparity); larger is closer.
    InverseRelative,
    /// Metric depth in meters; strictly positive where valid.
    MetricMeters,
}

impl DepthKind {
    pub fn code(self) -> u32 {
        match self {
            DepthKind::InverseRelative => 0,
            DepthKind::MetricMeters => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(DepthKind::InverseRelative),
            1 => Some(DepthKind::MetricMeters),
            _ => None,
        }
    }
}

/// One boolean per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ValidMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::BadLength {
                width,
                height,
                len: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn all_valid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn all_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    #[inline]
    pub fn set(&mut self, idx: usize, valid: bool) {
        self.bits[idx] = valid;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Row-major indices of valid pixels, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn and(&self, other: &ValidMask) -> Result<ValidMask> {
        check_dims(self.dims(), other.dims())?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect();
        Ok(ValidMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    /// True when every valid pixel of `self` is also valid in `other`.
    pub fn is_subset_of(&self, other: &ValidMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// A dense `width x height` field of `f32` values with a validity mask.
///
/// Invalid pixels keep whatever sentinel they were loaded with and are never
/// read by the numeric code in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
    kind: DepthKind,
    valid: ValidMask,
}

/// Whether a raw value can be valid for the given kind.
#[inline]
pub fn usable_value(v: f32, kind: DepthKind) -> bool {
    match kind {
        DepthKind::InverseRelative => v.is_finite() && v != 0.0,
        DepthKind::MetricMeters => v.is_finite() && v > 0.0,
    }
}

impl DepthMap {
    /// Builds a map whose mask marks every finite, non-zero value valid
    /// (strictly positive for metric maps).
    pub fn from_values(width: usize, height: usize, values: Vec<f32>, kind: DepthKind) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::BadLength {
                width,
                height,
                len: values.len(),
            });
        }
        let bits = values.iter().map(|&v| usable_value(v, kind)).collect();
        Ok(Self {
            width,
            height,
            values,
            kind,
            valid: ValidMask { width, height, bits },
        })
    }

    /// Like [`DepthMap::from_values`], additionally restricted to `mask`.
    pub fn with_mask(width: usize, height: usize, values: Vec<f32>, kind: DepthKind, mask: &ValidMask) -> Result<Self> {
        let mut map = Self::from_values(width, height, values, kind)?;
        map.restrict(mask)?;
        Ok(map)
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        values: Vec<f32>,
        kind: DepthKind,
        valid: ValidMask,
    ) -> Self {
        debug_assert_eq!(values.len(), width * height);
        debug_assert_eq!(valid.dims(), (width, height));
        Self {
            width,
            height,
            values,
            kind,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kind(&self) -> DepthKind {
        self.kind
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &ValidMask {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.valid.get(idx)
    }

    /// Value at a valid pixel, `None` otherwise.
    #[inline]
    pub fn get(&self, idx: usize) -> Option<f32> {
        self.valid.get(idx).then(|| self.values[idx])
    }

    /// Depth (not inverse) at a valid pixel.
    pub fn depth_at(&self, idx: usize) -> Option<f64> {
        let v = f64::from(self.get(idx)?);
        Some(match self.kind {
            DepthKind::MetricMeters => v,
            DepthKind::InverseRelative => 1.0 / v,
        })
    }

    /// Inverse depth at a valid pixel.
    pub fn inverse_at(&self, idx: usize) -> Option<f64> {
        let v = f64::from(self.get(idx)?);
        Some(match self.kind {
            DepthKind::MetricMeters => 1.0 / v,
            DepthKind::InverseRelative => v,
        })
    }

    /// Intersects the validity mask with `mask`.
    pub fn restrict(&mut self, mask: &ValidMask) -> Result<()> {
        self.valid = self.valid.and(mask)?;
        Ok(())
    }

    /// Applies `f` to every valid value, producing a map of `kind`.
    /// Pixels where `f` yields an unusable value become invalid.
    pub fn map_valid(&self, kind: DepthKind, mut f: impl FnMut(f32) -> f32) -> DepthMap {
        let mut values = self.values.clone();
        let mut bits = self.valid.bits.clone();
        for (i, v) in values.iter_mut().enumerate() {
            if bits[i] {
                *v = f(*v);
                bits[i] = usable_value(*v, kind);
            }
            if !bits[i] {
                *v = 0.0;
            }
        }
        DepthMap {
            width: self.width,
            height: self.height,
            values,
            kind,
            valid: ValidMask {
                width: self.width,
                height: self.height,
                bits,
            },
        }
    }

    /// The same field expressed as inverse depth.
    pub fn to_inverse(&self) -> DepthMap {
        match self.kind {
            DepthKind::InverseRelative => self.clone(),
            DepthKind::MetricMeters => self.map_valid(DepthKind::InverseRelative, |v| 1.0 / v),
        }
    }

    /// The same field expressed as metric-style depth. Non-positive inverse
    /// values have no depth and become invalid.
    pub fn to_depth(&self) -> DepthMap {
        match self.kind {
            DepthKind::MetricMeters => self.clone(),
            DepthKind::InverseRelative => self.map_valid(DepthKind::MetricMeters, |v| 1.0 / v),
        }
    }
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}
