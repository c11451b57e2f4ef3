//! Image-based spray footprint measurement.
//!
//! A photograph of a sprayed target is rectified into millimetre plane
//! coordinates through a homography estimated from fiducial corner
//! correspondences, the red channel is segmented with Otsu's threshold, and
//! the largest 8-connected blob inside a square region of interest is
//! reported as an equivalent circular diameter.

mod homography;
mod otsu;
mod raster;
mod rectify;
mod spot;

use thiserror::Error;

pub use homography::{estimate_homography, Homography, MarkerAnnotations, MarkerCorrespondence};
pub use otsu::{otsu_from_histogram, otsu_threshold, OtsuResult};
pub use raster::{read_pnm, write_pgm, write_ppm, GrayPlane, RasterImage};
pub use rectify::{rectify, rectify_plane_nearest, MmRegion};
pub use spot::{label_components, measure_spot, measure_spot_default, Component, Polarity, SpotMeasurement, SpotOptions};

/// Rectification resolution used for spot measurement, pixels per millimetre.
pub const DEFAULT_RESOLUTION: f64 = 10.0;
/// Side of the square region of interest, mm.
pub const DEFAULT_ROI_SIZE: f64 = 24.0;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("degenerate correspondences: {0}")]
    Degenerate(String),
    #[error("homography is singular")]
    Singular,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image plane is empty")]
    EmptyImage,
    #[error("no foreground pixels inside the region of interest")]
    EmptySpot,
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("annotation file: {0}")]
    Annotation(#[from] serde_json::Error),
}
