//! Planar primitives shared by slicing, infill clipping and spray placement.

use serde::{Deserialize, Serialize};

/// Distance within which a point is considered to lie on a ring boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;

/// A point (or vector) in the build plane, millimetres.
///
/// Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rounds both coordinates to the nearest micrometre.
    pub fn quantized(self) -> Point2 {
        Point2::new(round_to(self.x, 1e3), round_to(self.y, 1e3))
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

/// Rounds `value` to a multiple of `1 / scale`, normalising negative zero.
pub fn round_to(value: f64, scale: f64) -> f64 {
    let r = (value * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Axis-aligned rectangle in the build plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            min: Point2::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point2::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point2>) -> Option<Rect> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut rect = Rect { min: first, max: first };
        for p in iter {
            rect.min.x = rect.min.x.min(p.x);
            rect.min.y = rect.min.y.min(p.y);
            rect.max.x = rect.max.x.max(p.x);
            rect.max.y = rect.max.y.max(p.y);
        }
        Some(rect)
    }
}

/// A closed polygon ring. The first vertex is repeated as the last one.
///
/// Counter-clockwise rings are outer boundaries, clockwise rings are holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ring(pub Vec<Point2>);

impl Ring {
    /// Builds a closed ring from an open vertex sequence.
    pub fn closed(mut points: Vec<Point2>) -> Ring {
        if let (Some(first), Some(last)) = (points.first().copied(), points.last().copied()) {
            if first != last {
                points.push(first);
            }
        }
        Ring(points)
    }

    pub fn points(&self) -> &[Point2] {
        &self.0
    }

    /// Consecutive vertex pairs, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    /// Shoelace area, positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .sum::<f64>()
    }

    pub fn is_hole(&self) -> bool {
        self.signed_area() < 0.0
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn reversed(&self) -> Ring {
        let mut pts = self.0.clone();
        pts.reverse();
        Ring(pts)
    }

    pub fn bounds(&self) -> Option<Rect> {
        Rect::from_points(self.0.iter())
    }

    /// Even-odd crossing test against this ring alone (boundary excluded).
    pub fn crossings_contain(&self, p: Point2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Smallest distance from `p` to any edge of the ring.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    p.distance(Point2::new(a.x + t * ab.x, a.y + t * ab.y))
}

/// Even-odd containment over a set of rings; points within
/// [`BOUNDARY_TOLERANCE`] of any edge count as inside.
pub fn rings_contain(rings: &[Ring], p: Point2) -> bool {
    if rings
        .iter()
        .any(|r| r.boundary_distance(p) <= BOUNDARY_TOLERANCE)
    {
        return true;
    }
    rings.iter().filter(|r| r.crossings_contain(p)).count() % 2 == 1
}

/// True when the disc of `radius` around `center` stays inside the rings.
pub fn disc_inside_rings(rings: &[Ring], center: Point2, radius: f64) -> bool {
    rings_contain(rings, center)
        && rings
            .iter()
            .all(|r| r.boundary_distance(center) + BOUNDARY_TOLERANCE >= radius)
}
