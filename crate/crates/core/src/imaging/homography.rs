use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ImagingError;
use crate::geometry::Point2;

/// A fiducial corner seen at `px` in the photograph and known to lie at
/// `mm` on the build plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerCorrespondence {
    pub px: Point2,
    pub mm: Point2,
}

/// Sidecar annotation file: `{"correspondences": [{"px": [u, v], "mm": [x, y]}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerAnnotations {
    pub correspondences: Vec<MarkerCorrespondence>,
}

impl MarkerAnnotations {
    pub fn from_json(text: &str) -> Result<Self, ImagingError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Projective map between two planes, normalised so that `m[(2, 2)] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Homography(pub Matrix3<f64>);

impl From<[[f64; 3]; 3]> for Homography {
    fn from(rows: [[f64; 3]; 3]) -> Self {
        Homography(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl From<Homography> for [[f64; 3]; 3] {
    fn from(h: Homography) -> Self {
        let m = h.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    /// Maps a point; `None` when it lands on the line at infinity.
    pub fn map(&self, p: Point2) -> Option<Point2> {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        if v.z.abs() < 1e-15 {
            return None;
        }
        Some(Point2::new(v.x / v.z, v.y / v.z))
    }

    pub fn inverse(&self) -> Result<Homography, ImagingError> {
        let inv = self.0.try_inverse().ok_or(ImagingError::Singular)?;
        if !inv.iter().all(|v| v.is_finite()) {
            return Err(ImagingError::Singular);
        }
        let scale = inv[(2, 2)];
        Ok(Homography(if scale.abs() > 1e-15 { inv / scale } else { inv }))
    }
}

fn collinear(a: Point2, b: Point2, c: Point2) -> bool {
    let ab = b - a;
    let ac = c - a;
    let cross = ab.x * ac.y - ab.y * ac.x;
    let scale = (ab.x.hypot(ab.y) * ac.x.hypot(ac.y)).max(f64::MIN_POSITIVE);
    cross.abs() <= 1e-9 * scale
}

fn any_collinear_triple(points: &[Point2]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if collinear(points[i], points[j], points[k]) {
                    return true;
                }
            }
        }
    }
    false
}

fn all_distinct_spread(points: &[Point2]) -> bool {
    let first = points[0];
    points.iter().any(|p| p.distance(first) > 0.0)
}

/// Similarity that moves the centroid to the origin and the mean distance to √2.
fn normalizer(points: &[Point2]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(m: &Matrix3<f64>, p: Point2) -> Point2 {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

/// Normalised direct linear transform from pixel to millimetre coordinates.
pub fn estimate_homography(corr: &[MarkerCorrespondence]) -> Result<Homography, ImagingError> {
    if corr.len() < 4 {
        return Err(ImagingError::TooFewCorrespondences(corr.len()));
    }
    let src: Vec<Point2> = corr.iter().map(|c| c.px).collect();
    let dst: Vec<Point2> = corr.iter().map(|c| c.mm).collect();
    if src.iter().chain(&dst).any(|p| !p.is_finite()) {
        return Err(ImagingError::Degenerate("non-finite coordinate".into()));
    }
    // a minimal set must be in general position; larger sets fall to the rank test
    if corr.len() == 4 && any_collinear_triple(&dst) {
        return Err(ImagingError::Degenerate("three plane points are collinear".into()));
    }
    if corr.len() == 4 && any_collinear_triple(&src) {
        return Err(ImagingError::Degenerate("three image points are collinear".into()));
    }

    if !all_distinct_spread(&src) || !all_distinct_spread(&dst) {
        return Err(ImagingError::Degenerate("points coincide".into()));
    }
    let t_src = normalizer(&src);
    let t_dst = normalizer(&dst);
    // pad to a square system so the SVD exposes the full right null space
    let rows = (2 * corr.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        let p = apply(&t_src, *s);
        let q = apply(&t_dst, *d);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -p.x;
        a[(r0, 1)] = -p.y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = q.x * p.x;
        a[(r0, 7)] = q.x * p.y;
        a[(r0, 8)] = q.x;
        a[(r1, 3)] = -p.x;
        a[(r1, 4)] = -p.y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = q.y * p.x;
        a[(r1, 7)] = q.y * p.y;
        a[(r1, 8)] = q.y;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(ImagingError::Singular)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let s_max = svd.singular_values[order[order.len() - 1]];
    let s_second = svd.singular_values[order[1]];
    if s_second <= 1e-10 * s_max {
        return Err(ImagingError::Degenerate("correspondences do not fix a unique homography".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::from_fn(|r, c| h[3 * r + c]);

    let t_dst_inv = t_dst.try_inverse().ok_or(ImagingError::Singular)?;
    let m = t_dst_inv * hn * t_src;
    let scale = m[(2, 2)];
    if scale.abs() < 1e-12 * m.abs().max() {
        return Err(ImagingError::Singular);
    }
    Ok(Homography(m / scale))
}
