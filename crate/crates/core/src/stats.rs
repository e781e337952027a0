//! Small robust-statistics helpers shared by alignment and the losses.

use alloc::vec;
use alloc::vec::Vec;

use crate::map::{check_dims, DepthMap, ValidMask};
use crate::{Error, Result};

/// Median of `values`; the mean of the two middle elements for even lengths.
/// Reorders `values`. Returns `None` when empty.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (lower, upper_mid, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper_mid = *upper_mid;
    if n % 2 == 1 {
        Some(upper_mid)
    } else {
        let lower_mid = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower_mid + upper_mid))
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut scratch = values.to_vec();
    median_in_place(&mut scratch)
}

/// Mean absolute deviation about `center`.
pub fn mean_abs_dev(values: &[f64], center: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| libm::fabs(v - center)).sum::<f64>() / values.len() as f64
}

/// Median / mean-absolute-deviation pair describing a map over a mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustScale {
    pub median: f64,
    pub mad: f64,
}

impl RobustScale {
    pub fn of(values: &[f64]) -> Result<Self> {
        let median = median(values).ok_or(Error::DegenerateFit("no valid pixels"))?;
        let mad = mean_abs_dev(values, median);
        Ok(Self { median, mad })
    }
}

/// Values of `map` at pixels valid in both `map` and `mask`, in row-major order.
pub fn gather(map: &DepthMap, mask: &ValidMask) -> Result<(Vec<usize>, Vec<f64>)> {
    check_dims(map.dims(), mask.dims())?;
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for i in mask.indices() {
        if let Some(v) = map.get(i) {
            idx.push(i);
            vals.push(f64::from(v));
        }
    }
    Ok((idx, vals))
}

/// A map shifted by its median and divided by its mean absolute deviation,
/// evaluated only at `mask` pixels (zero elsewhere).
pub fn normalize_over(map: &DepthMap, mask: &ValidMask) -> Result<Vec<f64>> {
    check_dims(map.dims(), mask.dims())?;
    let mut vals = Vec::with_capacity(mask.count());
    for i in mask.indices() {
        let v = map
            .get(i)
            .ok_or(Error::DegenerateFit("mask selects an invalid pixel"))?;
        vals.push(f64::from(v));
    }
    let scale = RobustScale::of(&vals)?;
    if !(scale.mad > 0.0) || !scale.mad.is_finite() {
        return Err(Error::DegenerateFit("zero mean absolute deviation"));
    }
    let mut out = vec![0.0; map.len()];
    for (i, v) in mask.indices().zip(vals) {
        out[i] = (v - scale.median) / scale.mad;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[7.0]), Some(7.0));
    }

    #[test]
    fn mad_about_median() {
        let v = [1.0, 2.0, 3.0, 8.0];
        let m = median(&v).unwrap();
        assert_eq!(m, 2.5);
        assert_eq!(mean_abs_dev(&v, m), 2.0);
    }
}
