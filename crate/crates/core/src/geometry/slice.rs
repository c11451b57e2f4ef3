//! Plane sectioning and contour stitching.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::polygon::{rings_contain, Point2, Rect, Ring};
use super::{GeometryError, TriangleMesh};

/// Endpoints closer than this are treated as the same contour vertex.
pub const STITCH_TOLERANCE: f64 = 1e-6;

/// One printed layer: closed contours sampled at the layer's mid-plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSlice {
    pub z_bottom: f64,
    pub z_top: f64,
    /// Counter-clockwise outer rings and clockwise hole rings.
    pub contours: Vec<Ring>,
    /// Net cross-section area, mm².
    pub area: f64,
}

impl LayerSlice {
    pub fn new(z_bottom: f64, z_top: f64, contours: Vec<Ring>) -> LayerSlice {
        let area = contours.iter().map(Ring::signed_area).sum::<f64>().max(0.0);
        LayerSlice {
            z_bottom,
            z_top,
            contours,
            area,
        }
    }

    pub fn thickness(&self) -> f64 {
        self.z_top - self.z_bottom
    }

    pub fn outer_rings(&self) -> impl Iterator<Item = &Ring> {
        self.contours.iter().filter(|r| !r.is_hole())
    }

    pub fn hole_rings(&self) -> impl Iterator<Item = &Ring> {
        self.contours.iter().filter(|r| r.is_hole())
    }

    pub fn bounds(&self) -> Option<Rect> {
        Rect::from_points(self.contours.iter().flat_map(|r| r.points()))
    }
}

/// Even-odd containment; points on (or within 1e-6 mm of) a ring count as inside.
pub fn point_in_layer(slice: &LayerSlice, p: Point2) -> bool {
    rings_contain(&slice.contours, p)
}

/// A sliced model, tagged with the content hash of its source mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStack {
    pub mesh_ref: String,
    pub layer_height: f64,
    pub layers: Vec<LayerSlice>,
}

impl SliceStack {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("slice stack serializes")
    }

    pub fn from_json(text: &str) -> Result<SliceStack, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Σ area × thickness over all layers.
    pub fn volume(&self) -> f64 {
        self.layers.iter().map(|l| l.area * l.thickness()).sum()
    }
}

/// Slices `mesh` into layers of `layer_height`, sampling each layer at its
/// mid-plane. The top layer is shortened to end at the mesh top.
pub fn slice_mesh(mesh: &TriangleMesh, layer_height: f64) -> Result<SliceStack, GeometryError> {
    if !(layer_height.is_finite() && layer_height > 0.0) {
        return Err(GeometryError::InvalidLayerHeight(layer_height));
    }
    let bb = mesh.bounding_box();
    let count = ((bb.height() / layer_height) - 1e-9).ceil().max(1.0) as usize;
    let layers = (0..count)
        .map(|k| {
            let z_bottom = bb.min.z + k as f64 * layer_height;
            let z_top = if k + 1 == count {
                bb.max.z
            } else {
                bb.min.z + (k + 1) as f64 * layer_height
            };
            let plane = 0.5 * (z_bottom + z_top);
            section_at(mesh, plane)
                .map(|contours| LayerSlice::new(z_bottom, z_top, contours))
                .map_err(|_| GeometryError::OpenContour { layer: k })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SliceStack {
        mesh_ref: mesh.content_hash(),
        layer_height,
        layers,
    })
}

/// Marker error for an unstitchable chain; [`slice_mesh`] attaches the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenChain;

/// Cross-section of the mesh at height `z` as oriented closed rings.
///
/// Vertices lying exactly on the plane are treated as lying just above it,
/// so every crossing triangle contributes exactly one segment.
pub fn section_at(mesh: &TriangleMesh, z: f64) -> Result<Vec<Ring>, OpenChain> {
    let segments: Vec<(Point2, Point2)> = mesh
        .triangles()
        .iter()
        .filter_map(|tri| triangle_segment(tri, z))
        .collect();

    let mut nodes = NodeIndex::default();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(segments.len());
    for (a, b) in &segments {
        let ia = nodes.intern(*a);
        let ib = nodes.intern(*b);
        if ia != ib {
            edges.push((ia, ib));
        }
    }

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes.points.len()];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adjacency[a].push(e);
        adjacency[b].push(e);
    }

    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start_edge in 0..edges.len() {
        if used[start_edge] {
            continue;
        }
        used[start_edge] = true;
        let (start, mut current) = edges[start_edge];
        let mut chain = vec![start, current];
        while current != start {
            let next = adjacency[current]
                .iter()
                .copied()
                .find(|&e| !used[e])
                .ok_or(OpenChain)?;
            used[next] = true;
            let (a, b) = edges[next];
            current = if a == current { b } else { a };
            chain.push(current);
        }
        chain.pop();
        let points = simplify(chain.into_iter().map(|i| nodes.points[i]).collect());
        if points.len() >= 3 {
            rings.push(Ring::closed(points));
        }
    }

    orient_by_parity(&mut rings);
    Ok(rings)
}

fn triangle_segment(tri: &[super::Point3; 3], z: f64) -> Option<(Point2, Point2)> {
    let above = tri.map(|p| p.z >= z);
    let n_above = above.iter().filter(|&&a| a).count();
    if n_above == 0 || n_above == 3 {
        return None;
    }
    // the vertex alone on its side of the plane
    let lone = (0..3)
        .find(|&i| above[i] != above[(i + 1) % 3] && above[i] != above[(i + 2) % 3])
        .expect("one vertex is alone on its side");
    let p = edge_crossing(tri[lone], tri[(lone + 1) % 3], z);
    let q = edge_crossing(tri[lone], tri[(lone + 2) % 3], z);
    Some((p, q))
}

/// Interpolates the plane crossing of an edge, always from its lower-side
/// endpoint so neighbouring triangles produce bit-identical points.
fn edge_crossing(u: super::Point3, v: super::Point3, z: f64) -> Point2 {
    let (a, b) = if u.z < z { (u, v) } else { (v, u) };
    let t = (z - a.z) / (b.z - a.z);
    Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

#[derive(Default)]
struct NodeIndex {
    points: Vec<Point2>,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl NodeIndex {
    fn cell(p: Point2) -> (i64, i64) {
        (
            (p.x / STITCH_TOLERANCE).floor() as i64,
            (p.y / STITCH_TOLERANCE).floor() as i64,
        )
    }

    fn intern(&mut self, p: Point2) -> usize {
        let (cx, cy) = Self::cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.grid.get(&(cx + dx, cy + dy)) {
                    if let Some(&id) = ids
                        .iter()
                        .find(|&&id| self.points[id].distance(p) <= STITCH_TOLERANCE)
                    {
                        return id;
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.grid.entry((cx, cy)).or_default().push(id);
        id
    }
}

/// Drops vertices that sit on the straight line through their neighbours.
fn simplify(mut points: Vec<Point2>) -> Vec<Point2> {
    let mut changed = true;
    while changed && points.len() > 3 {
        changed = false;
        let n = points.len();
        for i in 0..n {
            let a = points[(i + n - 1) % n];
            let b = points[i];
            let c = points[(i + 1) % n];
            let u = b - a;
            let v = c - b;
            let cross = u.x * v.y - u.y * v.x;
            let dot = u.x * v.x + u.y * v.y;
            let scale = u.x.hypot(u.y) * v.x.hypot(v.y);
            if dot > 0.0 && cross.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                points.remove(i);
                changed = true;
                break;
            }
        }
    }
    points
}

/// Even containment depth → counter-clockwise outer, odd → clockwise hole.
fn orient_by_parity(rings: &mut [Ring]) {
    let depths: Vec<usize> = (0..rings.len())
        .map(|i| {
            let probe = rings[i].points()[0];
            (0..rings.len())
                .filter(|&j| j != i && rings[j].crossings_contain(probe))
                .count()
        })
        .collect();
    for (ring, depth) in rings.iter_mut().zip(depths) {
        let want_ccw = depth % 2 == 0;
        if (ring.signed_area() > 0.0) != want_ccw {
            *ring = ring.reversed();
        }
    }
}
