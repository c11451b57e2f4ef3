//! Taste designs: per-layer spray events over a slice stack.
//!
//! Every operation takes a design by reference and returns a new one; the
//! input is never modified.

mod ops;
mod validate;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{CalibrationError, CalibrationSet};
use crate::geometry::{Point2, SliceStack};

pub use ops::{
    add_free_event, allocate_total_amount, fill_pattern, hex_lattice, intensity_to_duration,
    AllocationReport, AllocationRequest, LayerAllocation, PatternRequest,
};
pub use validate::{validate_design, ChannelMass, Diagnostic, DiagnosticCode, Severity, ValidationReport};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_CHANNELS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("layer {layer} does not exist (design has {count} layers)")]
    LayerOutOfRange { layer: usize, count: usize },
    #[error("layer {layer}: position ({}, {}) is outside the contour", position.x, position.y)]
    Placement { layer: usize, position: Point2 },
    #[error("predicted footprint diameter {diameter} mm is not positive")]
    InvalidFootprint { diameter: f64 },
    #[error("overlap must lie in [0, 0.9], got {0}")]
    InvalidOverlap(f64),
    #[error("channel {0} is not configured in this design")]
    UnknownChannel(u8),
    #[error("duration {duration} ms is outside the calibrated range [{min}, {max}] and not flagged as extrapolated")]
    DurationOutOfRange { duration: u32, min: u32, max: u32 },
    #[error("duration must be at least 1 ms")]
    ZeroDuration,
    #[error("standoff must be positive and finite, got {0}")]
    InvalidStandoff(f64),
    #[error("target mass must be positive and finite, got {0}")]
    InvalidMass(f64),
    #[error("layer weights: {0}")]
    InvalidWeights(String),
    #[error("intensity level must be 1 to 10, got {0}")]
    InvalidIntensity(u8),
    #[error("no layer has positive area")]
    NoPrintableLayer,
    #[error("target {target} mg exceeds the achievable maximum {achievable} mg")]
    Capacity { target: f64, achievable: f64 },
    #[error("design was made for mesh {design}, slices come from {slices}")]
    StaleDesign { design: String, slices: String },
    #[error("design has {design} layers, slice stack has {slices}")]
    LayerCountMismatch { design: usize, slices: usize },
    #[error("invalid channel set: {0}")]
    InvalidChannels(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// One seasoning line feeding one airbrush.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasteChannel {
    pub index: u8,
    pub name: String,
    /// mg solute per mg solution; carried as metadata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_concentration: Option<f64>,
    /// Display colour, RGB.
    pub color: [u8; 3],
}

impl TasteChannel {
    pub fn new(index: u8, name: &str, color: [u8; 3]) -> TasteChannel {
        TasteChannel {
            index,
            name: name.to_string(),
            solution_concentration: None,
            color,
        }
    }

    /// Sweet, salty, sour, bitter and umami on channels 0 to 4.
    pub fn defaults() -> Vec<TasteChannel> {
        vec![
            TasteChannel::new(0, "sweet", [236, 112, 160]),
            TasteChannel::new(1, "salty", [80, 140, 220]),
            TasteChannel::new(2, "sour", [230, 200, 40]),
            TasteChannel::new(3, "bitter", [120, 80, 50]),
            TasteChannel::new(4, "umami", [150, 90, 200]),
        ]
    }
}

/// Derived values attached when an event is placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub diameter_mm: f64,
    pub mass_mg: f64,
    /// The footprint circle crosses the layer contour.
    pub overflows_contour: bool,
}

/// One timed activation of one airbrush.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprayEvent {
    pub channel: u8,
    /// Surface position, mm, on a 0.001 mm grid.
    pub position: Point2,
    pub duration_ms: u32,
    /// Nozzle-to-surface distance, mm, on a 0.001 mm grid.
    pub standoff_mm: f64,
    /// Permits a duration outside the calibrated range.
    #[serde(default)]
    pub extrapolated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<EventAnnotation>,
}

impl SprayEvent {
    pub fn new(channel: u8, position: Point2, duration_ms: u32, standoff_mm: f64) -> SprayEvent {
        SprayEvent {
            channel,
            position: position.quantized(),
            duration_ms,
            standoff_mm: crate::geometry::round_to(standoff_mm, 1e3),
            extrapolated: false,
            annotation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    Free,
    Pattern,
    TotalAmount,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignLayer {
    pub events: Vec<SprayEvent>,
    /// Modes that produced events on this layer, sorted.
    #[serde(default)]
    pub modes: Vec<DesignMode>,
}

impl DesignLayer {
    fn mark(&mut self, mode: DesignMode) {
        if let Err(at) = self.modes.binary_search(&mode) {
            self.modes.insert(at, mode);
        }
    }

    /// Stable sort by channel; lattice order within a channel is kept.
    fn sort_events(&mut self) {
        self.events.sort_by_key(|e| e.channel);
    }
}

/// Versioned taste-design document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasteDesign {
    pub schema_version: u32,
    /// Document revision for optimistic concurrency.
    #[serde(default)]
    pub version: u64,
    pub mesh_ref: String,
    pub layer_height: f64,
    pub channels: Vec<TasteChannel>,
    pub layers: Vec<DesignLayer>,
    pub calibration_ref: String,
}

impl TasteDesign {
    /// Empty design over `slices` with the five default taste channels.
    pub fn new(slices: &SliceStack, cal: &CalibrationSet) -> TasteDesign {
        TasteDesign {
            schema_version: SCHEMA_VERSION,
            version: 0,
            mesh_ref: slices.mesh_ref.clone(),
            layer_height: slices.layer_height,
            channels: TasteChannel::defaults(),
            layers: vec![DesignLayer::default(); slices.len()],
            calibration_ref: cal.id.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    pub fn from_json(text: &str) -> Result<TasteDesign, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `sha256:<hex>` of the compact JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("design serializes");
        format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
    }

    pub fn event_count(&self) -> usize {
        self.layers.iter().map(|l| l.events.len()).sum()
    }

    pub fn channel(&self, index: u8) -> Option<&TasteChannel> {
        self.channels.iter().find(|c| c.index == index)
    }

    /// Checks the channel table: at most six, indices unique and below six.
    pub fn check_channels(&self) -> Result<(), PlannerError> {
        if self.channels.len() > MAX_CHANNELS {
            return Err(PlannerError::InvalidChannels(format!(
                "{} channels configured, at most {MAX_CHANNELS} allowed",
                self.channels.len()
            )));
        }
        let mut seen = [false; MAX_CHANNELS];
        for c in &self.channels {
            let i = c.index as usize;
            if i >= MAX_CHANNELS {
                return Err(PlannerError::InvalidChannels(format!("index {i} exceeds 5")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(PlannerError::InvalidChannels(format!("index {i} repeated")));
            }
        }
        Ok(())
    }

    /// Rejects slices that are not the ones this design was made for.
    pub fn check_against(&self, slices: &SliceStack) -> Result<(), PlannerError> {
        if self.mesh_ref != slices.mesh_ref {
            return Err(PlannerError::StaleDesign {
                design: self.mesh_ref.clone(),
                slices: slices.mesh_ref.clone(),
            });
        }
        if self.layers.len() != slices.len() {
            return Err(PlannerError::LayerCountMismatch {
                design: self.layers.len(),
                slices: slices.len(),
            });
        }
        Ok(())
    }
}
