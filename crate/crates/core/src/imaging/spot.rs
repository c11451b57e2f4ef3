use serde::{Deserialize, Serialize};

use super::{
    estimate_homography, otsu_threshold, rectify, ImagingError, MarkerCorrespondence, MmRegion,
    RasterImage, DEFAULT_RESOLUTION, DEFAULT_ROI_SIZE,
};
use crate::calibration::CalibrationSample;
use crate::geometry::Point2;

/// Which Otsu class holds the sprayed spot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Spot pixels are `<= threshold` (dye absorbs red less than the substrate reflects).
    #[default]
    Darker,
    /// Spot pixels are `> threshold`.
    Brighter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotOptions {
    /// Rectification resolution, px/mm.
    pub resolution: f64,
    pub foreground: Polarity,
}

impl Default for SpotOptions {
    fn default() -> Self {
        SpotOptions {
            resolution: DEFAULT_RESOLUTION,
            foreground: Polarity::Darker,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotMeasurement {
    /// `2·√(area/π)`, mm.
    pub equivalent_diameter: f64,
    /// mm².
    pub area: f64,
    /// Plane coordinates, mm.
    pub centroid: Point2,
    pub threshold_used: u8,
    pub pixel_count: usize,
}

impl SpotMeasurement {
    /// Packs the measurement as a calibration-table row.
    pub fn to_sample(&self, distance: f64, duration: f64, replicate: u32) -> CalibrationSample {
        CalibrationSample::diameter(distance, duration, self.equivalent_diameter, replicate)
    }
}

/// A connected set of foreground pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub pixel_count: usize,
    /// Mean pixel index (column, row), not offset to pixel centres.
    pub mean: (f64, f64),
    /// Raster index of the first pixel reached.
    pub first: usize,
}

/// 8-connected components of `mask` in raster order of their first pixel.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> Vec<Component> {
    let mut seen = vec![false; mask.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut count, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % width, idx / width);
            count += 1;
            sx += x as f64;
            sy += y as f64;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let n = ny as usize * width + nx as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        components.push(Component {
            pixel_count: count,
            mean: (sx / count as f64, sy / count as f64),
            first: start,
        });
    }
    components
}

/// Measures the dominant spray spot inside a square ROI of side `roi_size`
/// mm centred at `roi_center` on the marker plane.
pub fn measure_spot(
    image: &RasterImage,
    corr: &[MarkerCorrespondence],
    roi_center: Point2,
    roi_size: f64,
    options: SpotOptions,
) -> Result<SpotMeasurement, ImagingError> {
    if !(roi_size.is_finite() && roi_size > 0.0) {
        return Err(ImagingError::InvalidParameter(format!(
            "ROI size must be positive, got {roi_size}"
        )));
    }
    let h = estimate_homography(corr)?;
    let region = MmRegion::centered(roi_center, roi_size);
    let rect = rectify(image, &h, region, options.resolution)?;
    let otsu = otsu_threshold(&rect.red)?;
    if otsu.no_contrast {
        return Err(ImagingError::EmptySpot);
    }
    let t = otsu.threshold;
    let mask: Vec<bool> = rect
        .red
        .data
        .iter()
        .map(|&v| match options.foreground {
            Polarity::Darker => v <= t,
            Polarity::Brighter => v > t,
        })
        .collect();
    let components = label_components(&mask, rect.width(), rect.height());
    let largest = components
        .iter()
        .reduce(|best, c| if c.pixel_count > best.pixel_count { c } else { best })
        .ok_or(ImagingError::EmptySpot)?;

    let px_area = 1.0 / (options.resolution * options.resolution);
    let area = largest.pixel_count as f64 * px_area;
    Ok(SpotMeasurement {
        equivalent_diameter: 2.0 * (area / std::f64::consts::PI).sqrt(),
        area,
        centroid: region.pixel_center(0, 0, options.resolution)
            + Point2::new(
                largest.mean.0 / options.resolution,
                largest.mean.1 / options.resolution,
            ),
        threshold_used: t,
        pixel_count: largest.pixel_count,
    })
}

/// Default ROI measurement with the standard 24 mm window.
pub fn measure_spot_default(
    image: &RasterImage,
    corr: &[MarkerCorrespondence],
    roi_center: Point2,
) -> Result<SpotMeasurement, ImagingError> {
    measure_spot(image, corr, roi_center, DEFAULT_ROI_SIZE, SpotOptions::default())
}
