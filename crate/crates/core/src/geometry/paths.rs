//! Perimeter and rectilinear infill toolpaths for one layer.

use serde::{Deserialize, Serialize};

use super::polygon::{Point2, Ring};
use super::slice::LayerSlice;

/// Extrusion polylines for one layer: perimeter loops first, then infill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrusionPath {
    pub layer_index: usize,
    pub segments: Vec<Vec<Point2>>,
    pub total_length: f64,
}

impl ExtrusionPath {
    pub fn from_segments(layer_index: usize, segments: Vec<Vec<Point2>>) -> ExtrusionPath {
        let total_length = segments.iter().map(|s| polyline_length(s)).sum();
        ExtrusionPath {
            layer_index,
            segments,
            total_length,
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Point2> {
        self.segments.iter().flatten()
    }
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Infill settings shared by every layer of a print.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfillSettings {
    /// Fraction in [0, 1]; zero disables infill.
    pub density: f64,
    /// Line spacing at full density, mm.
    pub spacing: f64,
}

impl Default for InfillSettings {
    fn default() -> Self {
        InfillSettings {
            density: 1.0,
            spacing: 1.6,
        }
    }
}

/// One perimeter per ring, then straight infill lines at
/// `infill_spacing / infill_density` clipped to the layer interior.
/// Even layers run lines parallel to y (constant x), odd layers parallel to x.
pub fn generate_extrusion_paths(
    slice: &LayerSlice,
    layer_index: usize,
    infill_density: f64,
    infill_spacing: f64,
) -> ExtrusionPath {
    let mut segments: Vec<Vec<Point2>> = slice
        .contours
        .iter()
        .map(|ring| ring.points().to_vec())
        .collect();

    let density = infill_density.clamp(0.0, 1.0);
    if density > 0.0 && infill_spacing > 0.0 {
        if let Some(bounds) = slice.bounds() {
            let pitch = infill_spacing / density;
            let vertical = layer_index % 2 == 0;
            let (lo, hi) = if vertical {
                (bounds.min.x, bounds.max.x)
            } else {
                (bounds.min.y, bounds.max.y)
            };
            let mut line = 0usize;
            let mut k = 1usize;
            loop {
                let c = lo + k as f64 * pitch;
                if c >= hi - 1e-9 {
                    break;
                }
                k += 1;
                let spans = scanline_spans(&slice.contours, c, vertical);
                for (a, b) in spans {
                    let (from, to) = if line % 2 == 0 { (a, b) } else { (b, a) };
                    let seg = if vertical {
                        vec![Point2::new(c, from), Point2::new(c, to)]
                    } else {
                        vec![Point2::new(from, c), Point2::new(to, c)]
                    };
                    segments.push(seg);
                    line += 1;
                }
            }
        }
    }
    ExtrusionPath::from_segments(layer_index, segments)
}

/// Interior intervals of the line `x = c` (or `y = c` when not `vertical`).
fn scanline_spans(rings: &[Ring], c: f64, vertical: bool) -> Vec<(f64, f64)> {
    let mut hits: Vec<f64> = Vec::new();
    for ring in rings {
        for (a, b) in ring.edges() {
            let (au, av, bu, bv) = if vertical {
                (a.x, a.y, b.x, b.y)
            } else {
                (a.y, a.x, b.y, b.x)
            };
            if (au > c) != (bu > c) {
                hits.push(av + (c - au) / (bu - au) * (bv - av));
            }
        }
    }
    hits.sort_by(f64::total_cmp);
    hits.chunks_exact(2)
        .filter(|pair| pair[1] - pair[0] > 1e-9)
        .map(|pair| (pair[0], pair[1]))
        .collect()
}
