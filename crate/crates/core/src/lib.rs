//! Layer-wise seasoning toolchain for extrusion food printing.
//!
//! The crate covers the whole offline pipeline:
//!
//! 1. [`geometry`] – mesh loading (STL/OBJ), mid-plane slicing, perimeter and
//!    rectilinear infill paths.
//! 2. [`calibration`] – the airbrush footprint and dose models, their
//!    inversion and least-squares fitting from measurement tables.
//! 3. [`imaging`] – homography rectification, Otsu segmentation and
//!    equivalent-diameter measurement of sprayed spots.
//! 4. [`planner`] – per-layer spray designs (free placement, hexagonal
//!    dense packing, total-amount allocation) and their validation.
//! 5. [`gcode`] – the merged extrusion + spray G-code dialect: emission,
//!    parsing and spray-plan extraction.
//! 6. [`simulator`] – a deterministic virtual printer producing per-layer
//!    seasoning deposition maps.

pub mod calibration;
pub mod gcode;
pub mod geometry;
pub mod imaging;
pub mod planner;
pub mod simulator;

/// Version string written into generated artifacts.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
