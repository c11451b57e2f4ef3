//! Mesh input, layer slicing and extrusion toolpaths.

mod mesh;
mod paths;
mod polygon;
pub mod shapes;
mod slice;

use thiserror::Error;

pub use mesh::{load_mesh, parse_mesh, BoundingBox, MeshFormat, Point3, SourceLocation, Triangle, TriangleMesh};
pub use paths::{generate_extrusion_paths, polyline_length, ExtrusionPath, InfillSettings};
pub use polygon::{
    disc_inside_rings, point_segment_distance, rings_contain, round_to, Point2, Rect, Ring,
    BOUNDARY_TOLERANCE,
};
pub use slice::{point_in_layer, section_at, slice_mesh, LayerSlice, SliceStack, STITCH_TOLERANCE};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {at}: {message}")]
    Parse { at: SourceLocation, message: String },
    #[error("mesh contains no triangles")]
    EmptyMesh,
    #[error("layer height must be a positive finite number, got {0}")]
    InvalidLayerHeight(f64),
    #[error("layer {layer}: contour chain does not close (non-manifold or open mesh)")]
    OpenContour { layer: usize },
}

/// Cuts every layer of the stack into toolpaths with shared infill settings.
pub fn generate_all_paths(stack: &SliceStack, infill: InfillSettings) -> Vec<ExtrusionPath> {
    stack
        .layers
        .iter()
        .enumerate()
        .map(|(k, layer)| generate_extrusion_paths(layer, k, infill.density, infill.spacing))
        .collect()
}
