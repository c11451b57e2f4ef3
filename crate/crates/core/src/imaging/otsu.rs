use serde::{Deserialize, Serialize};

use super::{GrayPlane, ImagingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtsuResult {
    /// Pixels `<= threshold` form the lower class.
    pub threshold: u8,
    /// Set when every pixel has the same value; `threshold` is that value.
    pub no_contrast: bool,
}

/// Otsu's threshold over the 256-bin histogram of `plane`.
pub fn otsu_threshold(plane: &GrayPlane) -> Result<OtsuResult, ImagingError> {
    if plane.is_empty() {
        return Err(ImagingError::EmptyImage);
    }
    let mut hist = [0u64; 256];
    for &v in &plane.data {
        hist[v as usize] += 1;
    }
    Ok(otsu_from_histogram(&hist).expect("non-empty histogram"))
}

/// Maximises between-class variance; ties go to the lowest threshold.
///
/// Returns `None` for an empty histogram.
pub fn otsu_from_histogram(hist: &[u64; 256]) -> Option<OtsuResult> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let occupied: Vec<usize> = (0..256).filter(|&v| hist[v] > 0).collect();
    if occupied.len() == 1 {
        let value = occupied[0] as u8;
        log::warn!("no contrast: every pixel equals {value}");
        return Some(OtsuResult {
            threshold: value,
            no_contrast: true,
        });
    }

    let sum_all: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();
    let n = total as i128;
    let mut weight_low: u64 = 0;
    let mut sum_low: u128 = 0;
    let mut best: Option<(f64, u8)> = None;
    for t in 0..255usize {
        weight_low += hist[t];
        sum_low += t as u128 * hist[t] as u128;
        let weight_high = total - weight_low;
        if weight_low == 0 || weight_high == 0 {
            continue;
        }
        // N²·σ_b² = (S_low·N − S·W_low)² / (W_low·W_high), with the
        // difference taken exactly in integers
        let d = sum_low as i128 * n - sum_all as i128 * weight_low as i128;
        let d = d as f64;
        let variance = d * d / (weight_low as f64 * weight_high as f64);
        if best.is_none_or(|(v, _)| variance > v) {
            best = Some((variance, t as u8));
        }
    }
    let (_, threshold) = best.expect("two occupied bins give a valid split");
    Some(OtsuResult {
        threshold,
        no_contrast: false,
    })
}
