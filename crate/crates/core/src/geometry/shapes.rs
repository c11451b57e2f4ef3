//! Procedural closed meshes used as fixtures and demo inputs.

use std::f64::consts::TAU;

use super::mesh::{Point3, Triangle, TriangleMesh};
use super::polygon::Point2;

fn build(triangles: Vec<Triangle>) -> TriangleMesh {
    TriangleMesh::from_triangles(triangles).expect("procedural mesh is non-empty")
}

/// Axis-aligned cube with one corner at the origin; 12 outward-facing triangles.
pub fn cube(side: f64) -> TriangleMesh {
    cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(side, side, side))
}

pub fn cuboid(min: Point3, max: Point3) -> TriangleMesh {
    let v = |i: usize| {
        Point3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let quads = [
        [0, 2, 3, 1], // bottom
        [4, 5, 7, 6], // top
        [0, 1, 5, 4], // front
        [2, 6, 7, 3], // back
        [0, 4, 6, 2], // left
        [1, 3, 7, 5], // right
    ];
    let mut tris = Vec::with_capacity(12);
    for q in quads {
        tris.push([v(q[0]), v(q[1]), v(q[2])]);
        tris.push([v(q[0]), v(q[2]), v(q[3])]);
    }
    build(tris)
}

/// Latitude/longitude sphere.
pub fn uv_sphere(center: Point3, radius: f64, segments: usize, stacks: usize) -> TriangleMesh {
    let vertex = |stack: usize, seg: usize| {
        if stack == 0 {
            return Point3::new(center.x, center.y, center.z - radius);
        }
        if stack == stacks {
            return Point3::new(center.x, center.y, center.z + radius);
        }
        let phi = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * stack as f64 / stacks as f64;
        let theta = TAU * (seg % segments) as f64 / segments as f64;
        Point3::new(
            center.x + radius * phi.cos() * theta.cos(),
            center.y + radius * phi.cos() * theta.sin(),
            center.z + radius * phi.sin(),
        )
    };
    let mut tris = Vec::new();
    for st in 0..stacks {
        for sg in 0..segments {
            let a = vertex(st, sg);
            let b = vertex(st, sg + 1);
            let c = vertex(st + 1, sg + 1);
            let d = vertex(st + 1, sg);
            if st == 0 {
                tris.push([a, c, d]);
            } else if st + 1 == stacks {
                tris.push([a, b, c]);
            } else {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
        }
    }
    build(tris)
}

/// Torus around the z axis, centred at the origin.
pub fn torus(major_radius: f64, minor_radius: f64, major_segments: usize, minor_segments: usize) -> TriangleMesh {
    let vertex = |i: usize, j: usize| {
        let u = TAU * (i % major_segments) as f64 / major_segments as f64;
        let v = TAU * (j % minor_segments) as f64 / minor_segments as f64;
        let r = major_radius + minor_radius * v.cos();
        Point3::new(r * u.cos(), r * u.sin(), minor_radius * v.sin())
    };
    let mut tris = Vec::new();
    for i in 0..major_segments {
        for j in 0..minor_segments {
            let a = vertex(i, j);
            let b = vertex(i + 1, j);
            let c = vertex(i + 1, j + 1);
            let d = vertex(i, j + 1);
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    build(tris)
}

/// Straight extrusion of a convex counter-clockwise polygon between two heights.
pub fn convex_prism(outline: &[Point2], z0: f64, z1: f64) -> TriangleMesh {
    let n = outline.len();
    let lo = |i: usize| Point3::new(outline[i % n].x, outline[i % n].y, z0);
    let hi = |i: usize| Point3::new(outline[i % n].x, outline[i % n].y, z1);
    let mut tris = Vec::new();
    for i in 1..n - 1 {
        tris.push([lo(0), lo(i + 1), lo(i)]);
        tris.push([hi(0), hi(i), hi(i + 1)]);
    }
    for i in 0..n {
        tris.push([lo(i), lo(i + 1), hi(i + 1)]);
        tris.push([lo(i), hi(i + 1), hi(i)]);
    }
    build(tris)
}

pub fn regular_polygon(center: Point2, radius: f64, segments: usize) -> Vec<Point2> {
    (0..segments)
        .map(|i| {
            let t = TAU * i as f64 / segments as f64;
            Point2::new(center.x + radius * t.cos(), center.y + radius * t.sin())
        })
        .collect()
}

/// Solid cylinder approximated by a regular prism.
pub fn cylinder(center: Point2, radius: f64, height: f64, segments: usize) -> TriangleMesh {
    convex_prism(&regular_polygon(center, radius, segments), 0.0, height)
}

/// Hollow cylinder (annulus extruded along z).
pub fn tube(center: Point2, inner: f64, outer: f64, height: f64, segments: usize) -> TriangleMesh {
    let ring = |r: f64, i: usize, z: f64| {
        let t = TAU * (i % segments) as f64 / segments as f64;
        Point3::new(center.x + r * t.cos(), center.y + r * t.sin(), z)
    };
    let mut tris = Vec::new();
    for i in 0..segments {
        let (o0, o1) = (ring(outer, i, 0.0), ring(outer, i + 1, 0.0));
        let (i0, i1) = (ring(inner, i, 0.0), ring(inner, i + 1, 0.0));
        let (ot0, ot1) = (ring(outer, i, height), ring(outer, i + 1, height));
        let (it0, it1) = (ring(inner, i, height), ring(inner, i + 1, height));
        // outer wall, inner wall, bottom cap, top cap
        tris.extend([[o0, o1, ot1], [o0, ot1, ot0]]);
        tris.extend([[i0, it1, i1], [i0, it0, it1]]);
        tris.extend([[o0, i1, o1], [o0, i0, i1]]);
        tris.extend([[ot0, ot1, it1], [ot0, it1, it0]]);
    }
    build(tris)
}
