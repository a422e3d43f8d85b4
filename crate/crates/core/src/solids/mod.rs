//! Boundary representations of 2D and 3D solids.
//!
//! Planar solids are embedded in the `z = 0` plane so that every query in
//! the crate works on three-component points; the third coordinate of a 2D
//! query is ignored.

mod bvh;
pub mod io;
pub mod mesh;
pub mod polygon;

use nalgebra::{Point2, Point3, Vector3};

pub use io::{load_solid, save_obj, save_poly_json, save_stl, SolidFormat};
pub use mesh::TriangleMesh;
pub use polygon::Polygon2;

/// Axis-aligned box. 2D boxes have `min.z == max.z == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<I: IntoIterator<Item = Point3<f64>>>(points: I) -> Self {
        points.into_iter().fold(Self::empty(), |mut b, p| {
            b.min = b.min.inf(&p);
            b.max = b.max.sup(&p);
            b
        })
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point3::new(a.x, a.y, a.z),
            Point3::new(b.x, a.y, a.z),
            Point3::new(a.x, b.y, a.z),
            Point3::new(b.x, b.y, a.z),
            Point3::new(a.x, a.y, b.z),
            Point3::new(b.x, a.y, b.z),
            Point3::new(a.x, b.y, b.z),
            Point3::new(b.x, b.y, b.z),
        ]
    }
}

#[derive(Debug, Clone)]
pub enum Boundary {
    Mesh(TriangleMesh),
    Polygon(Polygon2),
}

/// An immutable solid with a cached bounding box.
#[derive(Debug, Clone)]
pub struct Solid {
    boundary: Boundary,
    bbox: Aabb,
}

impl Solid {
    pub fn from_mesh(mesh: TriangleMesh) -> Self {
        let bbox = Aabb::from_points(mesh.vertices().iter().copied());
        Self {
            boundary: Boundary::Mesh(mesh),
            bbox,
        }
    }

    pub fn from_polygon(polygon: Polygon2) -> Self {
        let bbox = Aabb::from_points(
            polygon
                .loops()
                .iter()
                .flatten()
                .map(|p| Point3::new(p.x, p.y, 0.0)),
        );
        Self {
            boundary: Boundary::Polygon(polygon),
            bbox,
        }
    }

    pub fn dimension(&self) -> usize {
        match self.boundary {
            Boundary::Mesh(_) => 3,
            Boundary::Polygon(_) => 2,
        }
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn bounding_box(&self) -> Aabb {
        self.bbox
    }

    /// Enclosed volume (3D) or area (2D).
    pub fn measure(&self) -> f64 {
        match &self.boundary {
            Boundary::Mesh(m) => m.signed_volume(),
            Boundary::Polygon(p) => p.signed_area(),
        }
    }

    /// Exact distance from `p` to the discrete boundary.
    pub fn unsigned_distance(&self, p: &Point3<f64>) -> f64 {
        match &self.boundary {
            Boundary::Mesh(m) => m.unsigned_distance(p),
            Boundary::Polygon(poly) => poly.unsigned_distance(&Point2::new(p.x, p.y)),
        }
    }

    /// Applies `x -> rotation * x + translation` to every vertex. For 2D
    /// solids the rotation must act in the xy-plane.
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        match &self.boundary {
            Boundary::Mesh(m) => {
                let vertices = m
                    .vertices()
                    .iter()
                    .map(|v| Point3::from(rotation * v.coords + translation))
                    .collect();
                Self::from_mesh(
                    TriangleMesh::new(vertices, m.faces().to_vec())
                        .expect("rigid motion preserves mesh validity"),
                )
            }
            Boundary::Polygon(p) => {
                let loops = p
                    .loops()
                    .iter()
                    .map(|l| {
                        l.iter()
                            .map(|v| {
                                let w = rotation * Vector3::new(v.x, v.y, 0.0) + translation;
                                Point2::new(w.x, w.y)
                            })
                            .collect()
                    })
                    .collect();
                Self::from_polygon(Polygon2::new(loops).expect("rigid motion preserves simplicity"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use nalgebra::{Matrix3, Rotation3};
    use proptest::prelude::*;

    #[test]
    fn bounding_boxes() {
        let cube = Solid::from_mesh(shapes::unit_cube());
        let b = cube.bounding_box();
        assert_eq!(b.min, Point3::new(0.0, 0.0, 0.0));
        assert_eq!(b.max, Point3::new(1.0, 1.0, 1.0));

        let sq = Solid::from_polygon(shapes::square(1.0));
        let b = sq.bounding_box();
        assert_eq!((b.min.x, b.min.y, b.max.x, b.max.y), (0.0, 0.0, 1.0, 1.0));

        let sphere = Solid::from_mesh(shapes::icosphere(1.0, 3));
        let b = sphere.bounding_box();
        // Scan of vertices: the icosahedron axes put vertices exactly on +-1 only in
        // some directions; all lie on the unit sphere.
        for k in 0..3 {
            assert!(b.max[k] <= 1.0 + 1e-12 && b.max[k] > 0.99);
            assert!(b.min[k] >= -1.0 - 1e-12 && b.min[k] < -0.99);
        }
    }

    #[test]
    fn icosphere_volume_and_distance() {
        let sphere = Solid::from_mesh(shapes::icosphere(1.0, 3));
        if let Boundary::Mesh(m) = sphere.boundary() {
            assert_eq!(m.faces().len(), 1280);
            assert_eq!(m.euler_characteristic(), 2);
        }
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((sphere.measure() - exact).abs() / exact < 0.02);
        let d = sphere.unsigned_distance(&Point3::new(0.0, 0.0, 1.7));
        // Brute force over faces.
        let brute = match sphere.boundary() {
            Boundary::Mesh(m) => (0..m.faces().len())
                .map(|f| {
                    let [a, b, c] = m.triangle(f);
                    let p = Point3::new(0.0, 0.0, 1.7);
                    (p - mesh::closest_point_on_triangle(&p, &a, &b, &c)).norm()
                })
                .fold(f64::INFINITY, f64::min),
            _ => unreachable!(),
        };
        assert_eq!(d, brute);
        assert!((d - 0.7).abs() < 0.01);
    }

    fn arb_rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (-3.2f64..3.2, -3.2f64..3.2, -3.2f64..3.2)
            .prop_map(|(a, b, c)| *Rotation3::from_euler_angles(a, b, c).matrix())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distance_rigid_invariant(
            r in arb_rotation(),
            t in prop::array::uniform3(-2.0f64..2.0),
            p in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let s = Solid::from_mesh(shapes::l_bracket());
            let t = Vector3::from(t);
            let moved = s.transformed(&r, &t);
            let p = Point3::from(p);
            let q = Point3::from(r * p.coords + t);
            prop_assert!((s.unsigned_distance(&p) - moved.unsigned_distance(&q)).abs() < 1e-9);
        }

        #[test]
        fn distance_is_one_lipschitz(
            p in prop::array::uniform3(-2.0f64..3.0),
            q in prop::array::uniform3(-2.0f64..3.0),
        ) {
            let s = Solid::from_mesh(shapes::l_bracket());
            let (p, q) = (Point3::from(p), Point3::from(q));
            let lhs = (s.unsigned_distance(&p) - s.unsigned_distance(&q)).abs();
            prop_assert!(lhs <= (p - q).norm() + 1e-12);
        }

        #[test]
        fn polygon_distance_is_one_lipschitz(
            p in prop::array::uniform2(-2.0f64..3.0),
            q in prop::array::uniform2(-2.0f64..3.0),
        ) {
            let s = Solid::from_polygon(shapes::square(1.0));
            let p = Point3::new(p[0], p[1], 0.0);
            let q = Point3::new(q[0], q[1], 0.0);
            let lhs = (s.unsigned_distance(&p) - s.unsigned_distance(&q)).abs();
            prop_assert!(lhs <= (p - q).norm() + 1e-12);
        }
    }
}
