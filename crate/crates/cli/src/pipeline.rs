//! Operations shared by the command line and the HTTP service, so that both
//! entry points produce byte-identical artifacts from identical inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tasteprint_core::calibration::{CalibrationSet, ModelWarning};
use tasteprint_core::gcode::{generate_gcode, parse_gcode, MachineProfile};
use tasteprint_core::geometry::{
    generate_all_paths, parse_mesh, slice_mesh, InfillSettings, MeshFormat, SliceStack, TriangleMesh,
};
use tasteprint_core::planner::{validate_design, TasteDesign};
use tasteprint_core::simulator::{
    compare_to_design, simulate, ComparisonReport, SimulationOptions, SimulationResult, SyncViolation,
};

use crate::error::{AppError, AppResult};

/// Relative tolerance of the map-mass conservation check.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

pub fn detect_format(name: &str, bytes: &[u8]) -> AppResult<MeshFormat> {
    MeshFormat::detect(Path::new(name), bytes)
        .ok_or_else(|| AppError::parse(format!("{name}: unsupported mesh format (expected .stl or .obj)")))
}

pub fn slice_bytes(name: &str, bytes: &[u8], layer_height: f64) -> AppResult<(TriangleMesh, SliceStack)> {
    let mesh = parse_mesh(bytes, detect_format(name, bytes)?)?;
    let slices = slice_mesh(&mesh, layer_height)?;
    Ok((mesh, slices))
}

pub fn parse_calibration(text: &str) -> AppResult<CalibrationSet> {
    Ok(CalibrationSet::from_json(text)?)
}

pub fn parse_profile(text: &str) -> AppResult<MachineProfile> {
    Ok(MachineProfile::from_json(text)?)
}

/// Validates `design` against `slices` and refuses it on any error diagnostic.
pub fn check_design(design: &TasteDesign, slices: &SliceStack, cal: &CalibrationSet) -> AppResult<()> {
    design.check_channels()?;
    design.check_against(slices)?;
    let report = validate_design(design, slices, cal);
    if report.has_errors() {
        let diagnostics: Vec<_> = report.errors().cloned().collect();
        return Err(AppError::validation(format!("design has {} error(s)", diagnostics.len()))
            .with_diagnostics(diagnostics));
    }
    Ok(())
}

pub fn render_gcode(
    slices: &SliceStack,
    design: &TasteDesign,
    profile: &MachineProfile,
    cal: &CalibrationSet,
    infill: InfillSettings,
) -> AppResult<String> {
    check_design(design, slices, cal)?;
    let paths = generate_all_paths(slices, infill);
    Ok(generate_gcode(slices, &paths, design, profile, cal)?.render())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcodeSummary {
    pub bytes: usize,
    pub layers: usize,
    pub sprays: usize,
    pub design_hash: String,
}

pub fn gcode_summary(text: &str, design: &TasteDesign) -> GcodeSummary {
    GcodeSummary {
        bytes: text.len(),
        layers: text.lines().filter(|l| l.starts_with(";LAYER:")).count(),
        sprays: text.lines().filter(|l| l.starts_with("M810")).count(),
        design_hash: design.content_hash(),
    }
}

/// Map mass of one layer and channel against the dose-model sum over the
/// sprays the printer executed there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub layer: usize,
    pub channel: u8,
    pub expected_mg: f64,
    pub simulated_mg: f64,
    pub relative_deviation: f64,
    pub conserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub options: SimulationOptions,
    pub layers: usize,
    pub sprays: usize,
    pub elapsed_time_s: f64,
    pub conservation: Vec<ConservationRow>,
    pub violations: Vec<SyncViolation>,
    pub warnings: Vec<String>,
    /// Present when a design was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonReport>,
    pub all_clear: bool,
}

impl SimulationSummary {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} sprays over {} layers, {:.1} s machine time\n",
            self.sprays, self.layers, self.elapsed_time_s
        );
        for v in &self.violations {
            out.push_str(&format!("violation: {}\n", v.message));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        for r in self.conservation.iter().filter(|r| !r.conserved) {
            out.push_str(&format!(
                "layer {} channel {}: map holds {:.9} mg, sprays delivered {:.9} mg\n",
                r.layer, r.channel, r.simulated_mg, r.expected_mg
            ));
        }
        if let Some(c) = &self.comparison {
            for line in c.to_text().lines().filter(|l| *l != "all clear" && *l != "deviations found") {
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(if self.all_clear { "conservation: all clear\n" } else { "conservation: deviations found\n" });
        out
    }
}

pub fn summarize(result: &SimulationResult, options: SimulationOptions, comparison: Option<ComparisonReport>) -> SimulationSummary {
    let mut conservation = Vec::new();
    for map in &result.maps {
        for ch in &map.channels {
            let expected: f64 = result
                .state
                .spray_log
                .iter()
                .filter(|r| r.layer == map.layer_index && r.channel == ch.channel)
                .map(|r| r.mass_mg)
                .sum();
            let simulated = map.mass(ch.channel);
            let relative_deviation = if expected > 0.0 {
                (simulated - expected).abs() / expected
            } else {
                simulated.abs()
            };
            conservation.push(ConservationRow {
                layer: map.layer_index,
                channel: ch.channel,
                expected_mg: expected,
                simulated_mg: simulated,
                relative_deviation,
                conserved: relative_deviation <= CONSERVATION_TOLERANCE,
            });
        }
    }
    let all_clear = result.violations.is_empty()
        && conservation.iter().all(|r| r.conserved)
        && comparison.as_ref().is_none_or(|c| c.all_clear);
    SimulationSummary {
        options,
        layers: result.maps.len(),
        sprays: result.state.spray_log.len(),
        elapsed_time_s: result.state.elapsed_time,
        conservation,
        violations: result.violations.clone(),
        warnings: result.warnings.clone(),
        comparison,
        all_clear,
    }
}

pub fn simulate_text(
    gcode: &str,
    cal: &CalibrationSet,
    profile: &MachineProfile,
    options: SimulationOptions,
    design: Option<&TasteDesign>,
) -> AppResult<(SimulationResult, SimulationSummary)> {
    let parsed = parse_gcode(gcode)?;
    for w in &parsed.warnings {
        log::warn!("line {}: {}", w.line, w.message);
    }
    let result = simulate(&parsed.program, cal, profile, options)?;
    let comparison = design.map(|d| compare_to_design(&result, d, cal));
    let summary = summarize(&result, options, comparison);
    Ok((result, summary))
}

/// Footprint and dose of a hypothetical event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub standoff_mm: f64,
    pub duration_ms: f64,
    pub diameter_mm: f64,
    pub mass_mg: f64,
    pub warnings: Vec<ModelWarning>,
}

pub fn predict(cal: &CalibrationSet, standoff_mm: f64, duration_ms: f64) -> AppResult<Prediction> {
    let d = cal.predict_diameter(standoff_mm, duration_ms)?;
    let m = cal.predict_mass(duration_ms)?;
    let mut warnings = d.warnings;
    for w in m.warnings {
        if !warnings.contains(&w) {
            warnings.push(w);
        }
    }
    Ok(Prediction {
        standoff_mm,
        duration_ms,
        diameter_mm: d.value,
        mass_mg: m.value,
        warnings,
    })
}
