//! Deterministic virtual printer and seasoning deposition maps.
//!
//! Each `M810` deposits the dose model's mass uniformly over a disc of the
//! footprint model's diameter, centred on the offset-corrected surface
//! position. Discs are rasterised with 4×4 subsamples per cell and the
//! density is normalised by the sampled coverage, so integrated map mass
//! equals the analytic sum up to rounding.

mod report;
mod sync;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{CalibrationError, CalibrationSet};
use crate::gcode::{Command, GcodeError, GcodeProgram, MachineProfile};
use crate::geometry::{Point2, Point3};

pub use report::{
    compare_to_design, export_maps, masses_csv, ComparisonReport, MassComparison, SpotComparison,
};
pub use sync::{check_synchronization, SyncViolation, ViolationKind};

/// Subsamples per cell side.
pub const SUBSAMPLES: usize = 4;
/// Allowed relative gap between sampled coverage and the analytic disc area.
pub const COVERAGE_TOLERANCE: f64 = 0.005;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("command {command}: synchronization violation: {message}")]
    Synchronization { command: usize, message: String },
    #[error("command {command}: {axis} = {value} mm leaves the build volume [{min}, {max}]")]
    Bounds {
        command: usize,
        axis: char,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid simulation options: {0}")]
    Options(String),
    #[error(transparent)]
    Program(#[from] GcodeError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationOptions {
    /// Relative footprint inflation on absorbent substrates.
    pub spread_factor: f64,
    /// Map cell edge, mm.
    pub cell_size: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            spread_factor: 0.0,
            cell_size: 0.2,
        }
    }
}

/// One executed spray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprayRecord {
    pub layer: usize,
    pub channel: u8,
    /// Index of the `M810` in the program.
    pub command: usize,
    pub nozzle: Point3,
    pub surface_position: Point2,
    pub standoff_mm: f64,
    pub duration_ms: u32,
    pub diameter_mm: f64,
    pub mass_mg: f64,
    /// Mean of the covered subsamples.
    pub centroid: Point2,
    /// Σ coverage × cell area, mm².
    pub coverage_area_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrinterState {
    pub position: Point3,
    pub e_axis: f64,
    pub current_layer: Option<usize>,
    pub spray_log: Vec<SprayRecord>,
    /// Seconds.
    pub elapsed_time: f64,
}

/// Mass density of one channel, mg/mm², row-major from `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDensity {
    pub channel: u8,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositionMap {
    pub layer_index: usize,
    pub cell_size: f64,
    /// Lower-left corner of cell (0, 0).
    pub origin: Point2,
    pub width: usize,
    pub height: usize,
    /// Channels sprayed on this layer, by index.
    pub channels: Vec<ChannelDensity>,
}

impl DepositionMap {
    fn empty(layer_index: usize, cell_size: f64) -> DepositionMap {
        DepositionMap {
            layer_index,
            cell_size,
            origin: Point2::new(0.0, 0.0),
            width: 0,
            height: 0,
            channels: Vec::new(),
        }
    }

    pub fn density(&self, channel: u8) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|c| c.channel == channel)
            .map(|c| c.density.as_slice())
    }

    /// Σ density × cell area for one channel, mg.
    pub fn mass(&self, channel: u8) -> f64 {
        let area = self.cell_size * self.cell_size;
        self.density(channel)
            .map(|d| d.iter().sum::<f64>() * area)
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.channels.iter().map(|c| self.mass(c.channel)).sum()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_size,
            self.origin.y + (j as f64 + 0.5) * self.cell_size,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// One map per layer block index.
    pub maps: Vec<DepositionMap>,
    pub state: PrinterState,
    pub violations: Vec<SyncViolation>,
    pub warnings: Vec<String>,
}

/// Executes commands one at a time.
pub struct VirtualPrinter<'a> {
    cal: &'a CalibrationSet,
    profile: &'a MachineProfile,
    options: SimulationOptions,
    state: PrinterState,
    feedrate: Option<f64>,
    layer_z: Option<f64>,
    positioned: bool,
    index: usize,
}

impl<'a> VirtualPrinter<'a> {
    pub fn new(
        cal: &'a CalibrationSet,
        profile: &'a MachineProfile,
        options: SimulationOptions,
    ) -> Result<VirtualPrinter<'a>, SimulationError> {
        profile.validate()?;
        if !(options.cell_size.is_finite() && options.cell_size > 0.0) {
            return Err(SimulationError::Options(format!(
                "cell_size must be positive, got {}",
                options.cell_size
            )));
        }
        if !(options.spread_factor.is_finite() && options.spread_factor > -1.0) {
            return Err(SimulationError::Options(format!(
                "spread_factor must exceed -1, got {}",
                options.spread_factor
            )));
        }
        Ok(VirtualPrinter {
            cal,
            profile,
            options,
            state: PrinterState {
                position: Point3::new(0.0, 0.0, 0.0),
                e_axis: 0.0,
                current_layer: None,
                spray_log: Vec::new(),
                elapsed_time: 0.0,
            },
            feedrate: None,
            layer_z: None,
            positioned: false,
            index: 0,
        })
    }

    pub fn state(&self) -> &PrinterState {
        &self.state
    }

    pub fn into_state(self) -> PrinterState {
        self.state
    }

    fn check_bounds(&self, axis: char, value: f64) -> Result<(), SimulationError> {
        let [w, d, h] = self.profile.build_volume;
        let (min, max) = match axis {
            'X' => (-w / 2.0, w / 2.0),
            'Y' => (-d / 2.0, d / 2.0),
            _ => (0.0, h),
        };
        if value < min - 1e-9 || value > max + 1e-9 {
            return Err(SimulationError::Bounds {
                command: self.index,
                axis,
                value,
                min,
                max,
            });
        }
        Ok(())
    }

    fn sync_error(&self, message: String) -> SimulationError {
        SimulationError::Synchronization {
            command: self.index,
            message,
        }
    }

    /// Applies one command; positions and time advance, sprays are logged.
    pub fn step(&mut self, command: &Command) -> Result<(), SimulationError> {
        let result = self.apply(command);
        self.index += 1;
        result
    }

    fn apply(&mut self, command: &Command) -> Result<(), SimulationError> {
        if let Some(k) = command.layer_marker() {
            self.state.current_layer = Some(k);
            self.layer_z = None;
            self.positioned = false;
            return Ok(());
        }
        if command.is_end_marker() {
            self.state.current_layer = None;
            return Ok(());
        }
        match command {
            Command::Move { rapid, x, y, z, e, f } => {
                let from = self.state.position;
                let to = Point3::new(x.unwrap_or(from.x), y.unwrap_or(from.y), z.unwrap_or(from.z));
                self.check_bounds('X', to.x)?;
                self.check_bounds('Y', to.y)?;
                self.check_bounds('Z', to.z)?;
                if let Some(f) = f {
                    if !(*f > 0.0) {
                        return Err(self.sync_error(format!("feedrate {f} is not positive")));
                    }
                    self.feedrate = Some(*f);
                }
                let feed = self.feedrate.unwrap_or(if *rapid {
                    self.profile.travel_feedrate
                } else {
                    self.profile.print_feedrate
                });
                let dist = ((to.x - from.x).powi(2) + (to.y - from.y).powi(2) + (to.z - from.z).powi(2)).sqrt();
                self.state.elapsed_time += dist / feed * 60.0;
                self.state.position = to;
                if let Some(e) = e {
                    self.state.e_axis = *e;
                }
                if z.is_some() && self.state.current_layer.is_some() && self.layer_z.is_none() {
                    self.layer_z = Some(to.z);
                }
                self.positioned |= x.is_some() || y.is_some();
            }
            Command::Dwell { ms } => self.state.elapsed_time += *ms as f64 / 1000.0,
            Command::Home => {
                self.state.position = Point3::new(0.0, 0.0, 0.0);
            }
            Command::Spray { channel, duration_ms } => self.spray(*channel, *duration_ms)?,
            _ => {}
        }
        Ok(())
    }

    fn spray(&mut self, channel: u8, duration_ms: u32) -> Result<(), SimulationError> {
        let Some(layer) = self.state.current_layer else {
            return Err(GcodeError::SprayOutsideLayer { index: self.index }.into());
        };
        let offset = self
            .profile
            .offset(channel)
            .ok_or(GcodeError::ChannelOutOfRange {
                index: self.index,
                channel,
            })?
            .quantized();
        if !self.positioned {
            return Err(self.sync_error(format!("layer {layer}: spray without a positioning move")));
        }
        let nozzle = self.state.position;
        let layer_z = self.layer_z.unwrap_or(nozzle.z);
        let standoff = nozzle.z - layer_z;
        if !(standoff > 1e-9) {
            return Err(self.sync_error(format!(
                "layer {layer}: spray at Z {} is not above the layer top {layer_z}",
                nozzle.z
            )));
        }
        let standoff = crate::geometry::round_to(standoff, 1e3);
        let diameter = self.cal.predict_diameter(standoff, duration_ms as f64)?.value
            * (1.0 + self.options.spread_factor);
        let mass = self.cal.predict_mass(duration_ms as f64)?.value;
        self.state.spray_log.push(SprayRecord {
            layer,
            channel,
            command: self.index,
            nozzle,
            surface_position: Point2::new(nozzle.x, nozzle.y) + offset,
            standoff_mm: standoff,
            duration_ms,
            diameter_mm: diameter,
            mass_mg: mass,
            centroid: Point2::new(f64::NAN, f64::NAN),
            coverage_area_mm2: 0.0,
        });
        Ok(())
    }
}

struct Coverage {
    /// (cell index within the layer grid, covered subsamples)
    cells: Vec<(usize, u32)>,
    samples: u32,
    centroid: Point2,
}

fn grid_index(v: f64, cell: f64) -> i64 {
    (v / cell).floor() as i64
}

fn cover_disc(center: Point2, radius: f64, cell: f64, origin: (i64, i64), width: usize) -> Coverage {
    let sub = SUBSAMPLES as i64;
    let r2 = radius * radius;
    let (i0, i1) = (grid_index(center.x - radius, cell), grid_index(center.x + radius, cell));
    let (j0, j1) = (grid_index(center.y - radius, cell), grid_index(center.y + radius, cell));
    let mut cells = Vec::new();
    let (mut samples, mut sx, mut sy) = (0u32, 0.0, 0.0);
    for j in j0..=j1 {
        for i in i0..=i1 {
            let mut hit = 0u32;
            for b in 0..sub {
                for a in 0..sub {
                    let px = (i as f64 + (a as f64 + 0.5) / sub as f64) * cell;
                    let py = (j as f64 + (b as f64 + 0.5) / sub as f64) * cell;
                    if (px - center.x).powi(2) + (py - center.y).powi(2) <= r2 {
                        hit += 1;
                        sx += px;
                        sy += py;
                    }
                }
            }
            if hit > 0 {
                let idx = (j - origin.1) as usize * width + (i - origin.0) as usize;
                cells.push((idx, hit));
                samples += hit;
            }
        }
    }
    if samples == 0 {
        // footprint smaller than the sampling: the whole dose lands in one cell
        let (i, j) = (grid_index(center.x, cell), grid_index(center.y, cell));
        let idx = (j - origin.1) as usize * width + (i - origin.0) as usize;
        let n = (SUBSAMPLES * SUBSAMPLES) as u32;
        return Coverage {
            cells: vec![(idx, n)],
            samples: n,
            centroid: center,
        };
    }
    Coverage {
        cells,
        samples,
        centroid: Point2::new(sx / samples as f64, sy / samples as f64),
    }
}

/// Rasterises the logged sprays of one layer.
fn layer_map(layer: usize, records: &mut [&mut SprayRecord], cell: f64, warnings: &mut Vec<String>) -> DepositionMap {
    if records.is_empty() {
        return DepositionMap::empty(layer, cell);
    }
    let (mut i0, mut j0, mut i1, mut j1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for r in records.iter() {
        let p = r.surface_position;
        let rad = r.diameter_mm / 2.0;
        i0 = i0.min(grid_index(p.x - rad, cell));
        j0 = j0.min(grid_index(p.y - rad, cell));
        i1 = i1.max(grid_index(p.x + rad, cell));
        j1 = j1.max(grid_index(p.y + rad, cell));
    }
    let width = (i1 - i0 + 1) as usize;
    let height = (j1 - j0 + 1) as usize;
    let mut channels: Vec<ChannelDensity> = Vec::new();
    let sample_area = cell * cell / (SUBSAMPLES * SUBSAMPLES) as f64;
    for r in records.iter_mut() {
        let radius = r.diameter_mm / 2.0;
        let cov = cover_disc(r.surface_position, radius, cell, (i0, j0), width);
        let covered = cov.samples as f64 * sample_area;
        let analytic = std::f64::consts::PI * radius * radius;
        if analytic > 0.0 && ((covered - analytic) / analytic).abs() > COVERAGE_TOLERANCE {
            warnings.push(format!(
                "layer {layer}: spray at command {} covers {covered:.4} mm² against {analytic:.4} mm² analytic",
                r.command
            ));
        }
        r.centroid = cov.centroid;
        r.coverage_area_mm2 = covered;
        let at = match channels.binary_search_by_key(&r.channel, |c| c.channel) {
            Ok(at) => at,
            Err(at) => {
                channels.insert(
                    at,
                    ChannelDensity {
                        channel: r.channel,
                        density: vec![0.0; width * height],
                    },
                );
                at
            }
        };
        // cell mass = hit / samples × mass, spread over the cell area
        let per_hit = r.mass_mg / (cov.samples as f64 * cell * cell);
        let grid = &mut channels[at].density;
        for (idx, hit) in cov.cells {
            grid[idx] += hit as f64 * per_hit;
        }
    }
    DepositionMap {
        layer_index: layer,
        cell_size: cell,
        origin: Point2::new(i0 as f64 * cell, j0 as f64 * cell),
        width,
        height,
        channels,
    }
}

/// Runs `program` on a virtual printer and rasterises every spray.
///
/// Fatal: sprays at or below the layer top, sprays without a positioning
/// move, moves outside the build volume. Ordering and Z-monotonicity
/// problems are reported in `violations`.
pub fn simulate(
    program: &GcodeProgram,
    cal: &CalibrationSet,
    profile: &MachineProfile,
    options: SimulationOptions,
) -> Result<SimulationResult, SimulationError> {
    let mut printer = VirtualPrinter::new(cal, profile, options)?;
    for c in &program.commands {
        printer.step(c)?;
    }
    let mut state = printer.into_state();
    let layer_count = program
        .layer_blocks()
        .iter()
        .map(|b| b.layer + 1)
        .max()
        .unwrap_or(0);
    let mut warnings = Vec::new();
    let mut maps = Vec::with_capacity(layer_count);
    for k in 0..layer_count {
        let mut records: Vec<&mut SprayRecord> =
            state.spray_log.iter_mut().filter(|r| r.layer == k).collect();
        maps.push(layer_map(k, &mut records, options.cell_size, &mut warnings));
    }
    Ok(SimulationResult {
        maps,
        state,
        violations: check_synchronization(program),
        warnings,
    })
}
