use serde::{Deserialize, Serialize};

use super::{GrayPlane, Homography, ImagingError, RasterImage};
use crate::geometry::Point2;

/// Axis-aligned output window on the millimetre plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmRegion {
    pub origin: Point2,
    pub width: f64,
    pub height: f64,
}

impl MmRegion {
    pub fn centered(center: Point2, size: f64) -> Self {
        MmRegion {
            origin: Point2::new(center.x - size / 2.0, center.y - size / 2.0),
            width: size,
            height: size,
        }
    }

    fn pixel_dims(&self, resolution: f64) -> Result<(usize, usize), ImagingError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(ImagingError::InvalidParameter(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let w = (self.width * resolution).round();
        let h = (self.height * resolution).round();
        if !(w >= 1.0 && h >= 1.0) {
            return Err(ImagingError::InvalidParameter("output region is empty".into()));
        }
        Ok((w as usize, h as usize))
    }

    /// Plane coordinates of the centre of output pixel (`i`, `j`).
    pub fn pixel_center(&self, i: usize, j: usize, resolution: f64) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) / resolution,
            self.origin.y + (j as f64 + 0.5) / resolution,
        )
    }
}

/// Resamples `image` onto `region` at `resolution` px/mm.
///
/// `h` maps source pixels to millimetres; each output pixel centre is pulled
/// back through `h⁻¹` and sampled bilinearly. Source pixel `(x, y)` covers
/// `[x, x + 1) × [y, y + 1)`. Samples outside the source are black.
pub fn rectify(
    image: &RasterImage,
    h: &Homography,
    region: MmRegion,
    resolution: f64,
) -> Result<RasterImage, ImagingError> {
    let inv = h.inverse()?;
    let (w, ht) = region.pixel_dims(resolution)?;
    let mut out = RasterImage::new(w, ht);
    for j in 0..ht {
        for i in 0..w {
            let Some(src) = inv.map(region.pixel_center(i, j, resolution)) else {
                continue;
            };
            let rgb = image.planes().map(|plane| bilinear(plane, src).unwrap_or(0));
            out.set(i, j, rgb);
        }
    }
    Ok(out)
}

/// Nearest-neighbour variant for binary masks.
pub fn rectify_plane_nearest(
    plane: &GrayPlane,
    h: &Homography,
    region: MmRegion,
    resolution: f64,
) -> Result<GrayPlane, ImagingError> {
    let inv = h.inverse()?;
    let (w, ht) = region.pixel_dims(resolution)?;
    Ok(GrayPlane::from_fn(w, ht, |i, j| {
        inv.map(region.pixel_center(i, j, resolution))
            .filter(|p| inside(plane, *p))
            .map(|p| {
                let x = (p.x.floor() as usize).min(plane.width - 1);
                let y = (p.y.floor() as usize).min(plane.height - 1);
                plane.get(x, y)
            })
            .unwrap_or(0)
    }))
}

fn inside(plane: &GrayPlane, p: Point2) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= plane.width as f64 && p.y <= plane.height as f64
}

fn bilinear(plane: &GrayPlane, p: Point2) -> Option<u8> {
    if plane.is_empty() || !inside(plane, p) {
        return None;
    }
    let fx = p.x - 0.5;
    let fy = p.y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let clamp_x = |v: f64| v.clamp(0.0, (plane.width - 1) as f64) as usize;
    let clamp_y = |v: f64| v.clamp(0.0, (plane.height - 1) as f64) as usize;
    let (xa, xb) = (clamp_x(x0), clamp_x(x0 + 1.0));
    let (ya, yb) = (clamp_y(y0), clamp_y(y0 + 1.0));
    let v = |x: usize, y: usize| plane.get(x, y) as f64;
    let top = v(xa, ya) * (1.0 - tx) + v(xb, ya) * tx;
    let bottom = v(xa, yb) * (1.0 - tx) + v(xb, yb) * tx;
    Some((top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8)
}
