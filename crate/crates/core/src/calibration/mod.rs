//! Airbrush footprint and dose models.
//!
//! Footprint diameter (mm) is modelled as
//! `beta0 + beta1·√distance + beta2·√duration`, deposited mass (mg) as
//! `alpha0 + alpha1·duration`. Both were calibrated at a single line
//! pressure, which is kept as metadata only.

mod fit;
mod samples;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit_amount_model, fit_resolution_model, r_squared, FitModel, FitReport};
pub use samples::{read_samples_csv, write_samples_csv, CalibrationSample, SAMPLE_CSV_HEADER};

/// Calibration shipped with the toolchain.
pub const DEFAULT_CALIBRATION_JSON: &str = include_str!("../../data/default_calibration.json");

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("{name} must be positive and finite, got {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("invalid calibration: {0}")]
    Invalid(String),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("sample table: {0}")]
    Samples(String),
}

/// Fitted coefficients of both spray models plus their validity ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub id: String,
    /// Footprint intercept, mm.
    pub beta0: f64,
    /// Footprint slope on √distance, mm/√mm.
    pub beta1: f64,
    /// Footprint slope on √duration, mm/√ms.
    pub beta2: f64,
    /// Dose intercept, mg.
    pub alpha0: f64,
    /// Dose slope, mg/ms.
    pub alpha1: f64,
    /// Calibrated nozzle-to-surface distances, mm.
    pub distance_range: [f64; 2],
    /// Calibrated valve-open durations, ms.
    pub duration_range: [f64; 2],
    pub pressure_mpa: f64,
    pub resolution_r2: f64,
    pub amount_r2: f64,
    pub resolution_replicate_sd: f64,
    pub amount_replicate_sd: f64,
}

impl Default for CalibrationSet {
    fn default() -> Self {
        CalibrationSet {
            id: "filter-paper-0.10MPa".into(),
            beta0: -3.525,
            beta1: 1.450,
            beta2: 0.918,
            alpha0: -0.206,
            alpha1: 0.082,
            distance_range: [20.0, 40.0],
            duration_range: [10.0, 80.0],
            pressure_mpa: 0.10,
            resolution_r2: 0.86,
            amount_r2: 0.99,
            resolution_replicate_sd: 0.79,
            amount_replicate_sd: 0.2,
        }
    }
}

/// Non-fatal conditions attached to a model evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelWarning {
    DistanceExtrapolated,
    DurationExtrapolated,
    /// The raw model output was negative and was clamped to zero.
    ClampedToZero,
}

/// A model output together with any warnings raised while computing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub warnings: Vec<ModelWarning>,
}

/// Result of inverting the dose model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationEstimate {
    pub duration_ms: u32,
    /// Unrounded, unclamped inversion.
    pub raw_ms: f64,
    pub clamped: bool,
}

fn require_positive(name: &'static str, value: f64) -> Result<(), CalibrationError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CalibrationError::Domain { name, value })
    }
}

fn outside(range: [f64; 2], value: f64) -> bool {
    value < range[0] || value > range[1]
}

impl CalibrationSet {
    pub fn from_json(text: &str) -> Result<CalibrationSet, CalibrationError> {
        let cal: CalibrationSet =
            serde_json::from_str(text).map_err(|e| CalibrationError::Invalid(e.to_string()))?;
        cal.validate()?;
        Ok(cal)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let finite = [
            self.beta0,
            self.beta1,
            self.beta2,
            self.alpha0,
            self.alpha1,
            self.pressure_mpa,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(CalibrationError::Invalid("non-finite coefficient".into()));
        }
        for (name, r) in [("distance_range", self.distance_range), ("duration_range", self.duration_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]) {
                return Err(CalibrationError::Invalid(format!(
                    "{name} must be positive and ordered, got {r:?}"
                )));
            }
        }
        if self.alpha1 <= 0.0 {
            return Err(CalibrationError::Invalid(format!(
                "alpha1 must be positive, got {}",
                self.alpha1
            )));
        }
        for (name, r2) in [("resolution_r2", self.resolution_r2), ("amount_r2", self.amount_r2)] {
            if !(0.0..=1.0).contains(&r2) {
                return Err(CalibrationError::Invalid(format!("{name} must lie in [0, 1], got {r2}")));
            }
        }
        Ok(())
    }

    pub fn min_duration_ms(&self) -> u32 {
        self.duration_range[0].ceil() as u32
    }

    pub fn max_duration_ms(&self) -> u32 {
        self.duration_range[1].floor() as u32
    }

    /// Footprint diameter in mm for a spray at `distance` mm lasting `duration` ms.
    pub fn predict_diameter(&self, distance: f64, duration: f64) -> Result<Estimate, CalibrationError> {
        require_positive("distance", distance)?;
        require_positive("duration", duration)?;
        let mut warnings = Vec::new();
        if outside(self.distance_range, distance) {
            warnings.push(ModelWarning::DistanceExtrapolated);
        }
        if outside(self.duration_range, duration) {
            warnings.push(ModelWarning::DurationExtrapolated);
        }
        let raw = self.beta0 + self.beta1 * distance.sqrt() + self.beta2 * duration.sqrt();
        let value = if raw <= 0.0 {
            warnings.push(ModelWarning::ClampedToZero);
            0.0
        } else {
            raw
        };
        Ok(Estimate { value, warnings })
    }

    /// Deposited mass in mg for a spray lasting `duration` ms.
    pub fn predict_mass(&self, duration: f64) -> Result<Estimate, CalibrationError> {
        require_positive("duration", duration)?;
        let mut warnings = Vec::new();
        if outside(self.duration_range, duration) {
            warnings.push(ModelWarning::DurationExtrapolated);
        }
        let raw = self.alpha0 + self.alpha1 * duration;
        let value = if raw < 0.0 {
            warnings.push(ModelWarning::ClampedToZero);
            0.0
        } else {
            raw
        };
        Ok(Estimate { value, warnings })
    }

    /// Mass of one spray, treating out-of-model inputs as zero deposit.
    pub fn mass_mg(&self, duration_ms: u32) -> f64 {
        self.predict_mass(duration_ms as f64).map(|e| e.value).unwrap_or(0.0)
    }

    /// Footprint diameter of one spray, treating out-of-model inputs as zero.
    pub fn diameter_mm(&self, standoff: f64, duration_ms: u32) -> f64 {
        self.predict_diameter(standoff, duration_ms as f64)
            .map(|e| e.value)
            .unwrap_or(0.0)
    }

    /// Integer-millisecond duration whose predicted mass is closest to `target` mg,
    /// clamped into the calibrated duration range.
    pub fn duration_for_mass(&self, target: f64) -> Result<DurationEstimate, CalibrationError> {
        require_positive("target mass", target)?;
        if !(self.alpha1 > 0.0) {
            return Err(CalibrationError::Invalid(format!(
                "alpha1 must be positive, got {}",
                self.alpha1
            )));
        }
        let raw_ms = (target - self.alpha0) / self.alpha1;
        let rounded = raw_ms.round();
        let lo = self.min_duration_ms() as f64;
        let hi = self.max_duration_ms() as f64;
        let clamped = rounded < lo || rounded > hi;
        Ok(DurationEstimate {
            duration_ms: rounded.clamp(lo, hi) as u32,
            raw_ms,
            clamped,
        })
    }
}

/// Rescales a spray duration tuned at `reference_height` to another layer height.
pub fn scale_duration_for_layer_height(
    duration: f64,
    layer_height: f64,
    reference_height: f64,
) -> Result<u32, CalibrationError> {
    require_positive("duration", duration)?;
    require_positive("layer height", layer_height)?;
    require_positive("reference height", reference_height)?;
    Ok((duration * layer_height / reference_height).round().max(1.0) as u32)
}

/// Layer height at which the shipped calibration durations apply, mm.
pub const REFERENCE_LAYER_HEIGHT: f64 = 1.6;

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn shipped_json_matches_default() {
        let shipped = CalibrationSet::from_json(DEFAULT_CALIBRATION_JSON).unwrap();
        assert_eq!(shipped, CalibrationSet::default());
    }

    #[test]
    fn diameter_examples() {
        let cal = CalibrationSet::default();
        let d = cal.predict_diameter(20.0, 20.0).unwrap();
        assert!(close(d.value, 7.065, 5e-4), "{}", d.value);
        assert!(d.warnings.is_empty());
        let d = cal.predict_diameter(40.0, 60.0).unwrap();
        assert!(close(d.value, 12.756, 5e-4), "{}", d.value);

        let unit = CalibrationSet {
            beta0: 0.0,
            beta1: 1.0,
            beta2: 0.0,
            ..CalibrationSet::default()
        };
        assert_eq!(unit.predict_diameter(25.0, 33.0).unwrap().value, 5.0);
    }

    #[test]
    fn diameter_warnings_and_errors() {
        let cal = CalibrationSet::default();
        let d = cal.predict_diameter(50.0, 5.0).unwrap();
        assert_eq!(
            d.warnings,
            vec![ModelWarning::DistanceExtrapolated, ModelWarning::DurationExtrapolated]
        );
        let tiny = cal.predict_diameter(0.5, 0.5).unwrap();
        assert_eq!(tiny.value, 0.0);
        assert!(tiny.warnings.contains(&ModelWarning::ClampedToZero));
        assert!(matches!(
            cal.predict_diameter(0.0, 20.0),
            Err(CalibrationError::Domain { name: "distance", .. })
        ));
        assert!(cal.predict_diameter(20.0, -1.0).is_err());
    }

    #[test]
    fn mass_examples() {
        let cal = CalibrationSet::default();
        assert!(close(cal.predict_mass(80.0).unwrap().value, 6.354, 1e-12));
        assert!(close(cal.predict_mass(10.0).unwrap().value, 0.614, 1e-12));
        assert!(close(cal.predict_mass(20.0).unwrap().value, 1.434, 1e-12));
        let unit = CalibrationSet {
            alpha0: 0.0,
            alpha1: 1.0,
            ..CalibrationSet::default()
        };
        assert_eq!(unit.predict_mass(5.0).unwrap().value, 5.0);
        let low = cal.predict_mass(2.0).unwrap();
        assert_eq!(low.value, 0.0);
        assert!(low.warnings.contains(&ModelWarning::ClampedToZero));
        assert!(cal.predict_mass(0.0).is_err());
    }

    #[test]
    fn inversion_examples() {
        let cal = CalibrationSet::default();
        let d = cal.duration_for_mass(2.0).unwrap();
        assert_eq!(d.duration_ms, 27);
        assert!(close(d.raw_ms, 26.902_439, 1e-5));
        assert!(!d.clamped);
        assert_eq!(cal.duration_for_mass(6.354).unwrap().duration_ms, 80);

        let unit = CalibrationSet {
            alpha0: 0.0,
            alpha1: 1.0,
            duration_range: [1.0, 100.0],
            ..CalibrationSet::default()
        };
        assert_eq!(unit.duration_for_mass(42.0).unwrap().duration_ms, 42);

        let big = cal.duration_for_mass(100.0).unwrap();
        assert_eq!(big.duration_ms, 80);
        assert!(big.clamped);

        let broken = CalibrationSet {
            alpha1: 0.0,
            ..CalibrationSet::default()
        };
        assert!(matches!(broken.duration_for_mass(1.0), Err(CalibrationError::Invalid(_))));
    }

    #[test]
    fn layer_height_scaling() {
        assert_eq!(scale_duration_for_layer_height(40.0, 0.8, 1.6).unwrap(), 20);
        assert_eq!(scale_duration_for_layer_height(40.0, 1.6, 1.6).unwrap(), 40);
        assert_eq!(scale_duration_for_layer_height(1.0, 0.1, 1.6).unwrap(), 1);
        assert!(scale_duration_for_layer_height(40.0, 0.0, 1.6).is_err());
    }

    #[test]
    fn validation_rejects_bad_sets() {
        let mut cal = CalibrationSet::default();
        cal.duration_range = [80.0, 10.0];
        assert!(cal.validate().is_err());
        let mut cal = CalibrationSet::default();
        cal.amount_r2 = 1.5;
        assert!(cal.validate().is_err());
        let mut cal = CalibrationSet::default();
        cal.alpha1 = -0.1;
        assert!(cal.validate().is_err());
    }
}
