//! File-backed project directory.
//!
//! Every artifact is a plain file replaced atomically (write to a temporary
//! file in the same directory, then rename), so readers always see either
//! the old or the new document.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tasteprint_core::calibration::CalibrationSet;
use tasteprint_core::gcode::MachineProfile;
use tasteprint_core::geometry::{InfillSettings, MeshFormat, SliceStack};
use tasteprint_core::planner::TasteDesign;
use tasteprint_core::simulator::{DepositionMap, SimulationOptions, SimulationResult};

use crate::error::{AppError, AppResult};
use crate::pipeline::{self, GcodeSummary, SimulationSummary};

pub const PROJECT_DIR_ENV: &str = "TASTEPRINT_PROJECT_DIR";
pub const DEFAULT_PROJECT_DIR: &str = "tasteprint-project";

const MESH_META: &str = "mesh.json";
const MESH_DATA: &str = "mesh.bin";
const SLICES: &str = "slices.json";
const DESIGN: &str = "design.json";
const CALIBRATION: &str = "calibration.json";
const PROFILE: &str = "profile.json";
const PROGRAM: &str = "program.gcode";
const SIMULATION: &str = "simulation.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRecord {
    pub filename: String,
    pub format: MeshFormat,
    pub mesh_ref: String,
    pub triangles: usize,
    pub layer_height: f64,
    pub layers: usize,
}

#[derive(Serialize, Deserialize)]
struct StoredSimulation {
    summary: SimulationSummary,
    result: SimulationResult,
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub struct Project {
    dir: PathBuf,
}

impl Project {
    pub fn open(dir: impl Into<PathBuf>) -> AppResult<Project> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Project { dir })
    }

    /// `TASTEPRINT_PROJECT_DIR` if set, else `./tasteprint-project`.
    pub fn default_dir() -> PathBuf {
        std::env::var_os(PROJECT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_PROJECT_DIR))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> AppResult<()> {
        Ok(write_atomic(&self.path(name), bytes)?)
    }

    fn read(&self, name: &str) -> AppResult<Option<String>> {
        match std::fs::read_to_string(self.path(name)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn remove(&self, name: &str) -> AppResult<()> {
        match std::fs::remove_file(self.path(name)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }

    pub fn calibration(&self) -> AppResult<CalibrationSet> {
        match self.read(CALIBRATION)? {
            Some(text) => pipeline::parse_calibration(&text),
            None => Ok(CalibrationSet::default()),
        }
    }

    pub fn profile(&self) -> AppResult<MachineProfile> {
        match self.read(PROFILE)? {
            Some(text) => pipeline::parse_profile(&text),
            None => Ok(MachineProfile::default()),
        }
    }

    pub fn mesh(&self) -> AppResult<Option<MeshRecord>> {
        self.read(MESH_META)?
            .map(|t| serde_json::from_str(&t).map_err(AppError::from))
            .transpose()
    }

    /// The slice document exactly as stored.
    pub fn slices_text(&self) -> AppResult<String> {
        self.read(SLICES)?
            .ok_or_else(|| AppError::not_found("no mesh has been uploaded"))
    }

    pub fn slices(&self) -> AppResult<SliceStack> {
        Ok(SliceStack::from_json(&self.slices_text()?)?)
    }

    /// The stored design, or an empty one over the current slices.
    pub fn design(&self) -> AppResult<TasteDesign> {
        match self.read(DESIGN)? {
            Some(text) => Ok(TasteDesign::from_json(&text)?),
            None => Ok(TasteDesign::new(&self.slices()?, &self.calibration()?)),
        }
    }

    fn invalidate_outputs(&self) -> AppResult<()> {
        self.remove(PROGRAM)?;
        self.remove(SIMULATION)
    }

    /// Stores and slices a mesh. A design made for another mesh is replaced
    /// by an empty one whose version continues the old sequence.
    pub fn upload_mesh(&self, filename: &str, bytes: &[u8], layer_height: f64) -> AppResult<MeshRecord> {
        let (mesh, slices) = pipeline::slice_bytes(filename, bytes, layer_height)?;
        let record = MeshRecord {
            filename: filename.to_string(),
            format: pipeline::detect_format(filename, bytes)?,
            mesh_ref: slices.mesh_ref.clone(),
            triangles: mesh.triangle_count(),
            layer_height,
            layers: slices.len(),
        };
        let previous = match self.read(DESIGN)? {
            Some(text) => Some(TasteDesign::from_json(&text)?),
            None => None,
        };
        self.write(MESH_DATA, bytes)?;
        self.write(SLICES, slices.to_json().as_bytes())?;
        self.write(MESH_META, serde_json::to_string_pretty(&record)?.as_bytes())?;
        if let Some(old) = previous {
            if old.check_against(&slices).is_err() {
                let fresh = TasteDesign {
                    version: old.version + 1,
                    ..TasteDesign::new(&slices, &self.calibration()?)
                };
                self.write(DESIGN, fresh.to_json().as_bytes())?;
            }
        }
        self.invalidate_outputs()?;
        Ok(record)
    }

    /// Validates and stores `design` as the next version. `expected` is the
    /// version the caller started from; `None` skips the check.
    pub fn commit_design(&self, design: TasteDesign, expected: Option<u64>) -> AppResult<TasteDesign> {
        let current = self.design()?;
        if let Some(v) = expected {
            if v != current.version {
                return Err(AppError::conflict(current.version, v));
            }
        }
        let slices = self.slices()?;
        pipeline::check_design(&design, &slices, &self.calibration()?)?;
        let stored = TasteDesign {
            version: current.version + 1,
            ..design
        };
        self.write(DESIGN, stored.to_json().as_bytes())?;
        self.invalidate_outputs()?;
        Ok(stored)
    }

    /// Applies `edit` to the current design and commits the result.
    pub fn edit_design(
        &self,
        expected: Option<u64>,
        edit: impl FnOnce(&TasteDesign, &SliceStack, &CalibrationSet) -> AppResult<TasteDesign>,
    ) -> AppResult<TasteDesign> {
        let current = self.design()?;
        if let Some(v) = expected {
            if v != current.version {
                return Err(AppError::conflict(current.version, v));
            }
        }
        let edited = edit(&current, &self.slices()?, &self.calibration()?)?;
        self.commit_design(edited, Some(current.version))
    }

    pub fn generate_gcode(&self, infill: InfillSettings) -> AppResult<GcodeSummary> {
        let design = self.design()?;
        let text = pipeline::render_gcode(&self.slices()?, &design, &self.profile()?, &self.calibration()?, infill)?;
        self.write(PROGRAM, text.as_bytes())?;
        self.remove(SIMULATION)?;
        Ok(pipeline::gcode_summary(&text, &design))
    }

    pub fn gcode_text(&self) -> AppResult<String> {
        self.read(PROGRAM)?
            .ok_or_else(|| AppError::not_found("no G-code has been generated"))
    }

    pub fn simulate(&self, options: SimulationOptions) -> AppResult<SimulationSummary> {
        let text = self.gcode_text()?;
        let design = self.design()?;
        let (result, summary) = pipeline::simulate_text(&text, &self.calibration()?, &self.profile()?, options, Some(&design))?;
        let stored = StoredSimulation { summary, result };
        self.write(SIMULATION, serde_json::to_string(&stored)?.as_bytes())?;
        Ok(stored.summary)
    }

    fn stored_simulation(&self) -> AppResult<StoredSimulation> {
        match self.read(SIMULATION)? {
            Some(text) => Ok(serde_json::from_str(&text)?),
            None => Err(AppError::not_found("no simulation has been run")),
        }
    }

    /// The last simulation summary; runs one with default options when a
    /// program exists but has not been simulated yet.
    pub fn simulation(&self) -> AppResult<SimulationSummary> {
        match self.stored_simulation() {
            Ok(s) => Ok(s.summary),
            Err(e) if e.kind == crate::error::ErrorKind::NotFound && self.path(PROGRAM).exists() => {
                self.simulate(SimulationOptions::default())
            }
            Err(e) => Err(e),
        }
    }

    pub fn simulation_layer(&self, layer: usize) -> AppResult<DepositionMap> {
        let stored = self.stored_simulation()?;
        let count = stored.result.maps.len();
        stored
            .result
            .maps
            .into_iter()
            .nth(layer)
            .ok_or_else(|| AppError::not_found(format!("layer {layer} does not exist ({count} layers simulated)")))
    }
}
