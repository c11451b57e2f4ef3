use std::fmt;

use serde::{Deserialize, Serialize};

use super::{TasteDesign, MAX_CHANNELS, SCHEMA_VERSION};
use crate::calibration::CalibrationSet;
use crate::geometry::{disc_inside_rings, point_in_layer, SliceStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    SchemaVersion,
    InvalidChannels,
    StaleDesign,
    LayerCountMismatch,
    CalibrationMismatch,
    ChannelOutOfRange,
    OutsideContour,
    InvalidDuration,
    DurationExtrapolated,
    InvalidStandoff,
    DistanceExtrapolated,
    ZeroFootprint,
    FootprintOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        let code = serde_json::to_value(self.code).expect("code serializes");
        write!(f, "{severity}[{}]", code.as_str().unwrap_or_default())?;
        if let Some(layer) = self.layer {
            write!(f, " layer {layer}")?;
        }
        if let Some(event) = self.event {
            write!(f, " event {event}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Predicted deposit of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMass {
    pub channel: u8,
    pub events: usize,
    pub total_mg: f64,
    pub per_layer_mg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    pub mass_summary: Vec<ChannelMass>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    /// One diagnostic per line followed by the mass summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.diagnostics {
            out.push_str(&d.to_string());
            out.push('\n');
        }
        for m in &self.mass_summary {
            out.push_str(&format!(
                "channel {}: {} events, {:.3} mg\n",
                m.channel, m.events, m.total_mg
            ));
        }
        out
    }
}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn push(
        &mut self,
        severity: Severity,
        code: DiagnosticCode,
        layer: Option<usize>,
        event: Option<usize>,
        message: String,
    ) {
        self.0.push(Diagnostic {
            severity,
            code,
            layer,
            event,
            message,
        });
    }
}

/// Checks a design against its slices and calibration. Never fails; problems
/// come back as diagnostics.
pub fn validate_design(design: &TasteDesign, slices: &SliceStack, cal: &CalibrationSet) -> ValidationReport {
    use DiagnosticCode::*;
    use Severity::*;
    let mut out = Collector(Vec::new());

    if design.schema_version != SCHEMA_VERSION {
        out.push(
            Error,
            SchemaVersion,
            None,
            None,
            format!("schema version {} is not {SCHEMA_VERSION}", design.schema_version),
        );
    }
    if let Err(e) = design.check_channels() {
        out.push(Error, InvalidChannels, None, None, e.to_string());
    }
    if design.mesh_ref != slices.mesh_ref {
        out.push(
            Error,
            StaleDesign,
            None,
            None,
            format!("design mesh {} differs from sliced mesh {}", design.mesh_ref, slices.mesh_ref),
        );
    }
    if design.layers.len() != slices.len() {
        out.push(
            Error,
            LayerCountMismatch,
            None,
            None,
            format!("design has {} layers, slices have {}", design.layers.len(), slices.len()),
        );
    }
    if design.calibration_ref != cal.id {
        out.push(
            Warning,
            CalibrationMismatch,
            None,
            None,
            format!("design references calibration {}, checking with {}", design.calibration_ref, cal.id),
        );
    }

    let (dmin, dmax) = (cal.min_duration_ms(), cal.max_duration_ms());
    let mut summary: Vec<ChannelMass> = design
        .channels
        .iter()
        .map(|c| ChannelMass {
            channel: c.index,
            events: 0,
            total_mg: 0.0,
            per_layer_mg: vec![0.0; design.layers.len()],
        })
        .collect();
    summary.sort_by_key(|m| m.channel);

    for (k, layer) in design.layers.iter().enumerate() {
        let slice = slices.layers.get(k);
        for (i, e) in layer.events.iter().enumerate() {
            let at = (Some(k), Some(i));
            let known = design.channel(e.channel).is_some() && (e.channel as usize) < MAX_CHANNELS;
            if !known {
                out.push(Error, ChannelOutOfRange, at.0, at.1, format!("channel {} is not configured", e.channel));
            }
            if let Some(slice) = slice {
                if !e.position.is_finite() || !point_in_layer(slice, e.position) {
                    out.push(
                        Error,
                        OutsideContour,
                        at.0,
                        at.1,
                        format!("position ({}, {}) is outside the contour", e.position.x, e.position.y),
                    );
                }
            }
            if e.duration_ms == 0 {
                out.push(Error, InvalidDuration, at.0, at.1, "duration is 0 ms".into());
            } else if !(dmin..=dmax).contains(&e.duration_ms) {
                let flag = if e.extrapolated { "flagged" } else { "not flagged" };
                out.push(
                    Warning,
                    DurationExtrapolated,
                    at.0,
                    at.1,
                    format!("duration {} ms outside calibrated [{dmin}, {dmax}] ({flag})", e.duration_ms),
                );
            }
            let standoff_ok = e.standoff_mm.is_finite() && e.standoff_mm > 0.0;
            if !standoff_ok {
                out.push(Error, InvalidStandoff, at.0, at.1, format!("standoff {} mm", e.standoff_mm));
            } else if e.standoff_mm < cal.distance_range[0] || e.standoff_mm > cal.distance_range[1] {
                out.push(
                    Warning,
                    DistanceExtrapolated,
                    at.0,
                    at.1,
                    format!(
                        "standoff {} mm outside calibrated [{}, {}]",
                        e.standoff_mm, cal.distance_range[0], cal.distance_range[1]
                    ),
                );
            }
            if standoff_ok && e.duration_ms > 0 {
                let d = cal.diameter_mm(e.standoff_mm, e.duration_ms);
                if d <= 0.0 {
                    out.push(Warning, ZeroFootprint, at.0, at.1, "predicted footprint is empty".into());
                } else if let Some(slice) = slice {
                    if !disc_inside_rings(&slice.contours, e.position, d / 2.0) {
                        out.push(
                            Warning,
                            FootprintOverflow,
                            at.0,
                            at.1,
                            format!("{d:.3} mm footprint extends past the contour"),
                        );
                    }
                }
            }
            if let Some(m) = summary.iter_mut().find(|m| m.channel == e.channel) {
                let mass = if e.duration_ms > 0 { cal.mass_mg(e.duration_ms) } else { 0.0 };
                m.events += 1;
                m.total_mg += mass;
                m.per_layer_mg[k] += mass;
            }
        }
    }
    ValidationReport {
        diagnostics: out.0,
        mass_summary: summary,
    }
}
