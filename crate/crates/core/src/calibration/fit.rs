//! Ordinary least-squares fits of the footprint and dose models.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CalibrationError, CalibrationSample, CalibrationSet};

/// Relative singular-value floor below which the design is rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// Footprint diameter on [1, √distance, √duration].
    Resolution,
    /// Deposited mass on [1, duration].
    Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FitModel,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub r2: f64,
    /// Observed minus fitted, in sample order.
    pub residuals: Vec<f64>,
    /// Mean over conditions of the replicate sample standard deviation.
    pub mean_replicate_sd: f64,
    pub n_samples: usize,
}

impl FitReport {
    /// Writes the fitted coefficients and diagnostics into `cal`.
    pub fn apply_to(&self, cal: &mut CalibrationSet) {
        let c = &self.coefficients;
        match self.model {
            FitModel::Resolution => {
                cal.beta0 = c[0];
                cal.beta1 = c[1];
                cal.beta2 = c[2];
                cal.resolution_r2 = self.r2.clamp(0.0, 1.0);
                cal.resolution_replicate_sd = self.mean_replicate_sd;
            }
            FitModel::Amount => {
                cal.alpha0 = c[0];
                cal.alpha1 = c[1];
                cal.amount_r2 = self.r2.clamp(0.0, 1.0);
                cal.amount_replicate_sd = self.mean_replicate_sd;
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit report serializes")
    }
}

/// Fits footprint diameter against √distance and √duration.
pub fn fit_resolution_model(samples: &[CalibrationSample]) -> Result<FitReport, CalibrationError> {
    let rows: Vec<(&CalibrationSample, f64)> = samples
        .iter()
        .filter_map(|s| s.measured_diameter.map(|d| (s, d)))
        .collect();
    if rows.len() < 4 {
        return Err(CalibrationError::DegenerateDesign(format!(
            "need at least 4 diameter samples, got {}",
            rows.len()
        )));
    }
    if distinct(rows.iter().map(|(s, _)| s.distance)) < 2 {
        return Err(CalibrationError::DegenerateDesign(
            "all diameter samples share one distance".into(),
        ));
    }
    if distinct(rows.iter().map(|(s, _)| s.duration)) < 2 {
        return Err(CalibrationError::DegenerateDesign(
            "all diameter samples share one duration".into(),
        ));
    }
    let design = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => rows[i].0.distance.sqrt(),
        _ => rows[i].0.duration.sqrt(),
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|(_, d)| *d));
    let keys: Vec<(f64, f64)> = rows.iter().map(|(s, _)| (s.distance, s.duration)).collect();
    finish(FitModel::Resolution, &["beta0", "beta1", "beta2"], design, y, &keys)
}

/// Fits deposited mass against duration.
pub fn fit_amount_model(samples: &[CalibrationSample]) -> Result<FitReport, CalibrationError> {
    let rows: Vec<(&CalibrationSample, f64)> = samples
        .iter()
        .filter_map(|s| s.measured_mass.map(|m| (s, m)))
        .collect();
    if distinct(rows.iter().map(|(s, _)| s.duration)) < 2 {
        return Err(CalibrationError::DegenerateDesign(
            "need mass samples at two or more distinct durations".into(),
        ));
    }
    let design = DMatrix::from_fn(rows.len(), 2, |i, j| if j == 0 { 1.0 } else { rows[i].0.duration });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|(_, m)| *m));
    let keys: Vec<(f64, f64)> = rows.iter().map(|(s, _)| (s.distance, s.duration)).collect();
    finish(FitModel::Amount, &["alpha0", "alpha1"], design, y, &keys)
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<u64> = values.map(f64::to_bits).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn finish(
    model: FitModel,
    terms: &[&str],
    design: DMatrix<f64>,
    y: DVector<f64>,
    condition_keys: &[(f64, f64)],
) -> Result<FitReport, CalibrationError> {
    let beta = least_squares(&design, &y)?;
    let fitted = &design * &beta;
    let residuals: Vec<f64> = (&y - fitted).iter().copied().collect();
    let observed: Vec<f64> = y.iter().copied().collect();
    Ok(FitReport {
        model,
        terms: terms.iter().map(|t| t.to_string()).collect(),
        coefficients: beta.iter().copied().collect(),
        r2: r_squared(&observed, &residuals),
        mean_replicate_sd: mean_replicate_sd(condition_keys, &observed),
        n_samples: observed.len(),
        residuals,
    })
}

/// Minimum-norm least squares via SVD, refusing rank-deficient designs.
fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, CalibrationError> {
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_max > 0.0) || s_min / s_max < RANK_TOLERANCE {
        return Err(CalibrationError::DegenerateDesign(format!(
            "design matrix is rank deficient (condition {:.3e})",
            s_max / s_min
        )));
    }
    svd.solve(y, 0.0)
        .map_err(|e| CalibrationError::DegenerateDesign(e.to_string()))
}

/// `1 − SS_res / SS_tot`. A constant response that is fitted exactly scores 1.
pub fn r_squared(observed: &[f64], residuals: &[f64]) -> f64 {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

fn mean_replicate_sd(keys: &[(f64, f64)], values: &[f64]) -> f64 {
    let mut groups: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for (k, v) in keys.iter().zip(values) {
        groups.entry((k.0.to_bits(), k.1.to_bits())).or_default().push(*v);
    }
    let sds: Vec<f64> = groups
        .values()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect();
    if sds.is_empty() {
        0.0
    } else {
        sds.iter().sum::<f64>() / sds.len() as f64
    }
}
