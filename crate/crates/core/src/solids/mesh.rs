use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::bvh::Bvh;
use super::Aabb;
use crate::error::SolidError;

/// Closed, consistently oriented triangle mesh with outward normals.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    areas: Vec<f64>,
    normals: Vec<Vector3<f64>>,
    edge_count: usize,
    bvh: Bvh,
}

impl TriangleMesh {
    /// Validates closure and orientation. A consistently oriented mesh whose
    /// signed volume is negative is flipped to the outward convention.
    pub fn new(vertices: Vec<Point3<f64>>, mut faces: Vec<[u32; 3]>) -> Result<Self, SolidError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i as usize >= n {
                    return Err(SolidError::FaceIndex {
                        face: fi,
                        index: i as usize,
                        vertex_count: n,
                    });
                }
            }
        }
        let bbox = Aabb::from_points(vertices.iter().copied());
        let diag2 = (bbox.max - bbox.min).norm_squared();
        for (fi, f) in faces.iter().enumerate() {
            let area = triangle_area(&vertices, f);
            if !(area > 1e-12 * diag2) {
                return Err(SolidError::DegenerateFace { face: fi, area });
            }
        }

        // Directed edge -> owning face; each undirected edge must appear once per direction.
        let mut directed: HashMap<(u32, u32), usize> = HashMap::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if directed.insert((a, b), fi).is_some() {
                    return Err(SolidError::InconsistentOrientation {
                        face: fi,
                        a: a as usize,
                        b: b as usize,
                    });
                }
            }
        }
        for (&(a, b), &fi) in &directed {
            if !directed.contains_key(&(b, a)) {
                let count = 1;
                return Err(SolidError::OpenEdge {
                    face: fi,
                    a: a as usize,
                    b: b as usize,
                    count,
                });
            }
        }
        let edge_count = directed.len() / 2;

        let volume = signed_volume_of(&vertices, &faces);
        if volume < 0.0 {
            for f in &mut faces {
                f.swap(1, 2);
            }
        }
        if volume.abs() <= 1e-12 * diag2 * diag2.sqrt() {
            return Err(SolidError::EmptyVolume(volume));
        }

        let mut areas = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        for f in &faces {
            let (a, b, c) = corners(&vertices, f);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            areas.push(0.5 * norm);
            normals.push(cross / norm);
        }
        let boxes: Vec<Aabb> = faces
            .iter()
            .map(|f| {
                let (a, b, c) = corners(&vertices, f);
                Aabb::from_points([a, b, c])
            })
            .collect();
        let bvh = Bvh::build(&boxes);

        Ok(Self {
            vertices,
            faces,
            areas,
            normals,
            edge_count,
            bvh,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.areas[face]
    }

    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        self.normals[face]
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let (a, b, c) = corners(&self.vertices, &self.faces[face]);
        [a, b, c]
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count as i64 + self.faces.len() as i64
    }

    /// Divergence-theorem volume; positive for accepted meshes.
    pub fn signed_volume(&self) -> f64 {
        signed_volume_of(&self.vertices, &self.faces)
    }

    pub fn unsigned_distance(&self, p: &Point3<f64>) -> f64 {
        self.bvh
            .nearest(p, |fi| {
                let (a, b, c) = corners(&self.vertices, &self.faces[fi]);
                (p - closest_point_on_triangle(p, &a, &b, &c)).norm_squared()
            })
            .sqrt()
    }
}

fn corners(v: &[Point3<f64>], f: &[u32; 3]) -> (Point3<f64>, Point3<f64>, Point3<f64>) {
    (v[f[0] as usize], v[f[1] as usize], v[f[2] as usize])
}

fn triangle_area(v: &[Point3<f64>], f: &[u32; 3]) -> f64 {
    let (a, b, c) = corners(v, f);
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn signed_volume_of(v: &[Point3<f64>], faces: &[[u32; 3]]) -> f64 {
    faces
        .iter()
        .map(|f| {
            let (a, b, c) = corners(v, f);
            a.coords.dot(&b.coords.cross(&c.coords))
        })
        .sum::<f64>()
        / 6.0
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
