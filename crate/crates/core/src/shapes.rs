//! Canonical test and demo geometry.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point2, Point3};
use rand::Rng;

use crate::solids::{Polygon2, Solid, TriangleMesh};

/// Axis-aligned unit cube `[0,1]^3`, 8 vertices and 12 faces.
pub fn unit_cube() -> TriangleMesh {
    box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0))
}

pub fn box_mesh(min: Point3<f64>, max: Point3<f64>) -> TriangleMesh {
    let v: Vec<Point3<f64>> = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        })
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriangleMesh::new(v, faces).expect("box is closed")
}

/// Sphere of `radius` at the origin from an icosahedron subdivided
/// `subdivisions` times (`20 * 4^subdivisions` faces).
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Point3::from(nalgebra::Vector3::from(*c).normalize()))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Point3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (verts[a as usize].coords + verts[b as usize].coords).normalize();
                verts.push(Point3::from(m));
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut verts {
        *v = Point3::from(v.coords * radius);
    }
    TriangleMesh::new(verts, faces).expect("icosphere is closed")
}

/// L-shaped bracket: the planar L with arms of length 2 and thickness 0.5,
/// extruded by 1 along z.
pub fn l_bracket() -> TriangleMesh {
    let l = [
        Point2::new(0.0, 0.0),
        Point2::new(2.0, 0.0),
        Point2::new(2.0, 0.5),
        Point2::new(0.5, 0.5),
        Point2::new(0.5, 2.0),
        Point2::new(0.0, 2.0),
    ];
    extrude(&l, 0.0, 1.0)
}

/// Extrudes a simple counterclockwise loop between `z0` and `z1`.
pub fn extrude(loop_ccw: &[Point2<f64>], z0: f64, z1: f64) -> TriangleMesh {
    let n = loop_ccw.len() as u32;
    let mut v: Vec<Point3<f64>> = loop_ccw.iter().map(|p| Point3::new(p.x, p.y, z0)).collect();
    v.extend(loop_ccw.iter().map(|p| Point3::new(p.x, p.y, z1)));
    let mut faces = Vec::new();
    for tri in ear_clip(loop_ccw) {
        faces.push([tri[0] + n, tri[1] + n, tri[2] + n]);
        faces.push([tri[0], tri[2], tri[1]]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([i, j, j + n]);
        faces.push([i, j + n, i + n]);
    }
    TriangleMesh::new(v, faces).expect("extrusion of a simple loop is closed")
}

/// Ear-clipping triangulation of a simple counterclockwise loop.
pub fn ear_clip(l: &[Point2<f64>]) -> Vec<[u32; 3]> {
    let cross = |a: Point2<f64>, b: Point2<f64>, c: Point2<f64>| {
        (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
    };
    let mut idx: Vec<u32> = (0..l.len() as u32).collect();
    let mut out = Vec::new();
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (l[ia as usize], l[ib as usize], l[ic as usize]);
            if cross(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ia || j == ib || j == ic {
                    return false;
                }
                let p = l[j as usize];
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if !blocked {
                out.push([ia, ib, ic]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        assert!(clipped, "loop is not simple and counterclockwise");
    }
    out.push([idx[0], idx[1], idx[2]]);
    out
}

/// Square `[0,s]^2`.
pub fn square(side: f64) -> Polygon2 {
    rectangle(Point2::new(0.0, 0.0), Point2::new(side, side))
}

pub fn rectangle(min: Point2<f64>, max: Point2<f64>) -> Polygon2 {
    Polygon2::new(vec![vec![
        min,
        Point2::new(max.x, min.y),
        max,
        Point2::new(min.x, max.y),
    ]])
    .expect("rectangle is simple")
}

/// Regular `n`-gon of circumradius `radius` centered at the origin.
pub fn regular_polygon(radius: f64, n: usize) -> Polygon2 {
    Polygon2::new(vec![circle_loop(radius, n)]).expect("regular polygon is simple")
}

/// Regular-polygon annulus centered at the origin.
pub fn annulus(inner: f64, outer: f64, n: usize) -> Polygon2 {
    Polygon2::new(vec![circle_loop(outer, n), circle_loop(inner, n)]).expect("annulus is simple")
}

fn circle_loop(radius: f64, n: usize) -> Vec<Point2<f64>> {
    (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            Point2::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

/// Random convex polygon inscribed in a circle of `radius` about `center`.
pub fn random_convex_polygon<R: Rng>(rng: &mut R, center: Point2<f64>, radius: f64) -> Polygon2 {
    let n = rng.gen_range(5..10);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 0.2);
    if angles.len() < 3 {
        angles = vec![0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
    }
    let l = angles
        .iter()
        .map(|a| center + nalgebra::Vector2::new(a.cos(), a.sin()) * radius)
        .collect();
    Polygon2::new(vec![l]).expect("convex polygon is simple")
}

/// Random star-shaped (generally nonconvex) polygon about `center`.
pub fn random_star_polygon<R: Rng>(rng: &mut R, center: Point2<f64>, radius: f64) -> Polygon2 {
    let n = rng.gen_range(6..12);
    let l = (0..n)
        .map(|i| {
            let a = 2.0 * PI * (i as f64 + rng.gen_range(-0.3..0.3)) / n as f64;
            let r = radius * rng.gen_range(0.45..1.0);
            center + nalgebra::Vector2::new(a.cos(), a.sin()) * r
        })
        .collect();
    Polygon2::new(vec![l]).expect("star-shaped polygon is simple")
}

pub fn solid(mesh: TriangleMesh) -> Solid {
    Solid::from_mesh(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l_bracket_volume() {
        let m = l_bracket();
        assert!((m.signed_volume() - 1.75).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn annulus_area() {
        let a = annulus(0.5, 1.0, 64);
        let expected = 0.5 * 64.0 * (2.0 * PI / 64.0).sin() * (1.0 - 0.25);
        assert!((a.signed_area() - expected).abs() < 1e-12);
    }
}
