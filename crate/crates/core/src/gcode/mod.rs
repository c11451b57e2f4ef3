//! The merged extrusion and spray G-code dialect.
//!
//! Besides standard motion (`G0`/`G1`/`G4`/`G28`) the dialect adds one
//! command, `M810 C<channel> D<ms>`, which opens airbrush `channel` for `ms`
//! milliseconds. Each layer is a block opened by a `;LAYER:<k>` comment;
//! extrusion comes first, then the layer's sprays. The program ends with an
//! `;END` comment followed by a Z lift and `M84`.

mod generate;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::planner::PlannerError;

pub use generate::{extract_spray_plan, generate_gcode};
pub use parse::{parse_gcode, ParseWarning, ParsedProgram};

/// Channels a profile may address.
pub const MAX_AIRBRUSHES: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum GcodeError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("machine profile: {0}")]
    Profile(String),
    #[error("layer {layer}: spray height {z} mm exceeds the machine Z range {max} mm")]
    OutOfRange { layer: usize, z: f64, max: f64 },
    #[error("{paths} path layers for {layers} slice layers")]
    LayerCountMismatch { paths: usize, layers: usize },
    #[error("design does not validate: {0}")]
    InvalidDesign(String),
    #[error("command {index}: spray without a preceding positioning move")]
    OrphanSpray { index: usize },
    #[error("command {index}: spray outside any layer block")]
    SprayOutsideLayer { index: usize },
    #[error("command {index}: channel {channel} has no airbrush in the machine profile")]
    ChannelOutOfRange { index: usize, channel: u8 },
    #[error("program has no layer markers")]
    NoLayers,
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    /// `G0` when `rapid`, else `G1`. Absent axes keep their value.
    Move {
        rapid: bool,
        x: Option<f64>,
        y: Option<f64>,
        z: Option<f64>,
        e: Option<f64>,
        f: Option<f64>,
    },
    /// `G4 P<ms>`.
    Dwell { ms: u32 },
    /// `M810 C<channel> D<ms>`.
    Spray { channel: u8, duration_ms: u32 },
    /// `G28`.
    Home,
    /// `G90`.
    AbsolutePositioning,
    /// `M82`.
    AbsoluteExtrusion,
    /// `M84`.
    MotorsOff,
    /// `;text`, without the semicolon.
    Comment { text: String },
    /// A line the dialect does not interpret, kept verbatim.
    Opaque { text: String },
}

impl Command {
    pub fn travel(x: f64, y: f64, z: Option<f64>, f: f64) -> Command {
        Command::Move {
            rapid: true,
            x: Some(x),
            y: Some(y),
            z,
            e: None,
            f: Some(f),
        }
    }

    pub fn comment(text: impl Into<String>) -> Command {
        Command::Comment { text: text.into() }
    }

    /// A `G1` that sets E.
    pub fn is_extruding(&self) -> bool {
        matches!(self, Command::Move { rapid: false, e: Some(_), .. })
    }

    /// Layer index of a `;LAYER:<k>` marker.
    pub fn layer_marker(&self) -> Option<usize> {
        match self {
            Command::Comment { text } => text.strip_prefix("LAYER:")?.trim().parse().ok(),
            _ => None,
        }
    }

    pub fn is_end_marker(&self) -> bool {
        matches!(self, Command::Comment { text } if text == "END")
    }
}

fn axis(out: &mut fmt::Formatter<'_>, letter: char, value: Option<f64>, decimals: usize) -> fmt::Result {
    match value {
        Some(v) => write!(out, " {letter}{}", format_fixed(v, decimals)),
        None => Ok(()),
    }
}

/// Fixed-point text with negative zero printed as zero.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Move {
                rapid,
                x,
                y,
                z,
                e,
                f: feed,
            } => {
                f.write_str(if *rapid { "G0" } else { "G1" })?;
                axis(f, 'X', *x, 3)?;
                axis(f, 'Y', *y, 3)?;
                axis(f, 'Z', *z, 3)?;
                axis(f, 'E', *e, 6)?;
                axis(f, 'F', *feed, 3)
            }
            Command::Dwell { ms } => write!(f, "G4 P{ms}"),
            Command::Spray { channel, duration_ms } => write!(f, "M810 C{channel} D{duration_ms}"),
            Command::Home => f.write_str("G28"),
            Command::AbsolutePositioning => f.write_str("G90"),
            Command::AbsoluteExtrusion => f.write_str("M82"),
            Command::MotorsOff => f.write_str("M84"),
            Command::Comment { text } => write!(f, ";{text}"),
            Command::Opaque { text } => f.write_str(text),
        }
    }
}

/// Index range of one `;LAYER:<k>` block; `start` is the marker itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerBlock {
    pub layer: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GcodeProgram {
    pub commands: Vec<Command>,
}

impl GcodeProgram {
    /// LF-terminated text, one command per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.commands {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    /// Layer blocks in program order. A block runs to the next marker, the
    /// `;END` comment or the end of the program.
    pub fn layer_blocks(&self) -> Vec<LayerBlock> {
        let mut blocks: Vec<LayerBlock> = Vec::new();
        for (i, c) in self.commands.iter().enumerate() {
            let boundary = c.layer_marker().is_some() || c.is_end_marker();
            if boundary {
                if let Some(last) = blocks.last_mut() {
                    if last.end == usize::MAX {
                        last.end = i;
                    }
                }
            }
            if let Some(layer) = c.layer_marker() {
                blocks.push(LayerBlock {
                    layer,
                    start: i,
                    end: usize::MAX,
                });
            }
        }
        if let Some(last) = blocks.last_mut() {
            if last.end == usize::MAX {
                last.end = self.commands.len();
            }
        }
        blocks
    }

    pub fn spray_count(&self) -> usize {
        self.commands
            .iter()
            .filter(|c| matches!(c, Command::Spray { .. }))
            .count()
    }
}

/// Printer geometry and motion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineProfile {
    pub nozzle_diameter_mm: f64,
    pub syringe_capacity_ml: f64,
    pub flow_multiplier: f64,
    /// mm/min.
    pub travel_feedrate: f64,
    /// mm/min.
    pub print_feedrate: f64,
    /// XY offset of each airbrush from the extruder nozzle, indexed by channel.
    pub airbrush_offsets: Vec<Point2>,
    pub default_standoff_mm: f64,
    /// X, Y, Z extent from the origin, mm.
    pub build_volume: [f64; 3],
}

impl Default for MachineProfile {
    fn default() -> Self {
        MachineProfile {
            nozzle_diameter_mm: 1.6,
            syringe_capacity_ml: 30.0,
            flow_multiplier: 1.0,
            travel_feedrate: 3000.0,
            print_feedrate: 600.0,
            airbrush_offsets: vec![Point2::new(0.0, 0.0); MAX_AIRBRUSHES],
            default_standoff_mm: 20.0,
            build_volume: [220.0, 220.0, 250.0],
        }
    }
}

impl MachineProfile {
    pub fn from_json(text: &str) -> Result<MachineProfile, GcodeError> {
        let p: MachineProfile =
            serde_json::from_str(text).map_err(|e| GcodeError::Profile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<(), GcodeError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GcodeError::Profile(format!("{name} must be positive, got {v}")))
            }
        };
        positive("nozzle_diameter_mm", self.nozzle_diameter_mm)?;
        positive("syringe_capacity_ml", self.syringe_capacity_ml)?;
        positive("flow_multiplier", self.flow_multiplier)?;
        positive("travel_feedrate", self.travel_feedrate)?;
        positive("print_feedrate", self.print_feedrate)?;
        positive("default_standoff_mm", self.default_standoff_mm)?;
        for v in self.build_volume {
            positive("build_volume", v)?;
        }
        if self.airbrush_offsets.is_empty() || self.airbrush_offsets.len() > MAX_AIRBRUSHES {
            return Err(GcodeError::Profile(format!(
                "expected 1 to {MAX_AIRBRUSHES} airbrush offsets, got {}",
                self.airbrush_offsets.len()
            )));
        }
        if self.airbrush_offsets.iter().any(|o| !o.is_finite()) {
            return Err(GcodeError::Profile("airbrush offsets must be finite".into()));
        }
        Ok(())
    }

    pub fn offset(&self, channel: u8) -> Option<Point2> {
        self.airbrush_offsets.get(channel as usize).copied()
    }
}
