use nalgebra::{Point2, Vector2};

use crate::error::SolidError;

/// Planar solid bounded by simple closed loops: outer loops counterclockwise,
/// holes clockwise.
#[derive(Debug, Clone)]
pub struct Polygon2 {
    loops: Vec<Vec<Point2<f64>>>,
}

impl Polygon2 {
    /// Validates simplicity and normalizes orientation by nesting depth:
    /// even depth loops become counterclockwise, odd depth loops clockwise.
    pub fn new(loops: Vec<Vec<Point2<f64>>>) -> Result<Self, SolidError> {
        let mut loops = loops;
        for (li, l) in loops.iter_mut().enumerate() {
            // Drop an explicit closing vertex.
            if l.len() > 1 && l.first() == l.last() {
                l.pop();
            }
            if l.len() < 3 {
                return Err(SolidError::InvalidLoop {
                    loop_index: li,
                    message: format!("{} vertices, at least 3 required", l.len()),
                });
            }
            for i in 0..l.len() {
                let j = (i + 1) % l.len();
                if (l[j] - l[i]).norm() == 0.0 {
                    return Err(SolidError::InvalidLoop {
                        loop_index: li,
                        message: format!("zero-length segment {i}"),
                    });
                }
            }
        }
        check_simple(&loops)?;
        for (li, l) in loops.iter().enumerate() {
            if loop_area(l).abs() == 0.0 {
                return Err(SolidError::InvalidLoop {
                    loop_index: li,
                    message: "zero area".into(),
                });
            }
        }

        let depths: Vec<usize> = (0..loops.len())
            .map(|i| {
                let probe = loops[i][0];
                (0..loops.len())
                    .filter(|&j| j != i && point_in_loop(&loops[j], &probe))
                    .count()
            })
            .collect();
        for (l, depth) in loops.iter_mut().zip(&depths) {
            let ccw = loop_area(l) > 0.0;
            if ccw != (depth % 2 == 0) {
                l.reverse();
            }
        }
        let poly = Self { loops };
        let area = poly.signed_area();
        if !(area > 0.0) {
            return Err(SolidError::EmptyArea(area));
        }
        Ok(poly)
    }

    pub fn loops(&self) -> &[Vec<Point2<f64>>] {
        &self.loops
    }

    pub fn signed_area(&self) -> f64 {
        self.loops.iter().map(|l| loop_area(l)).sum()
    }

    /// Boundary segments `(start, end)` traversed with the interior on the left.
    pub fn segments(&self) -> impl Iterator<Item = (Point2<f64>, Point2<f64>)> + '_ {
        self.loops.iter().flat_map(|l| {
            (0..l.len()).map(move |i| (l[i], l[(i + 1) % l.len()]))
        })
    }

    pub fn segment_count(&self) -> usize {
        self.loops.iter().map(Vec::len).sum()
    }

    pub fn unsigned_distance(&self, p: &Point2<f64>) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance_squared(p, &a, &b))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

fn loop_area(l: &[Point2<f64>]) -> f64 {
    let n = l.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (l[i], l[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

pub(crate) fn point_segment_distance_squared(
    p: &Point2<f64>,
    a: &Point2<f64>,
    b: &Point2<f64>,
) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_squared()
}

fn point_in_loop(l: &[Point2<f64>], p: &Point2<f64>) -> bool {
    let mut inside = false;
    let n = l.len();
    for i in 0..n {
        let (a, b) = (l[i], l[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_intersect(p1: Point2<f64>, p2: Point2<f64>, q1: Point2<f64>, q2: Point2<f64>) -> bool {
    let d1 = cross(&(p2 - p1), &(q1 - p1));
    let d2 = cross(&(p2 - p1), &(q2 - p1));
    let d3 = cross(&(q2 - q1), &(p1 - q1));
    let d4 = cross(&(q2 - q1), &(p2 - q1));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(p1, p2, q1, d1) || on(p1, p2, q2, d2) || on(q1, q2, p1, d3) || on(q1, q2, p2, d4)
}

fn check_simple(loops: &[Vec<Point2<f64>>]) -> Result<(), SolidError> {
    let segs: Vec<(usize, usize, Point2<f64>, Point2<f64>)> = loops
        .iter()
        .enumerate()
        .flat_map(|(li, l)| (0..l.len()).map(move |i| (li, i, l[i], l[(i + 1) % l.len()])))
        .collect();
    for (x, &(la, ia, a1, a2)) in segs.iter().enumerate() {
        for &(lb, ib, b1, b2) in &segs[x + 1..] {
            if la == lb {
                let n = loops[la].len();
                // Adjacent segments share exactly one endpoint.
                if ib == (ia + 1) % n || ia == (ib + 1) % n {
                    let (shared, other_a, other_b) = if ib == (ia + 1) % n {
                        (a2, a1, b2)
                    } else {
                        (a1, a2, b1)
                    };
                    let u = other_a - shared;
                    let v = other_b - shared;
                    let overlapping = cross(&u, &v) == 0.0 && u.dot(&v) > 0.0;
                    if overlapping {
                        return Err(SolidError::SelfIntersection {
                            first: la,
                            first_segment: ia,
                            second: lb,
                            second_segment: ib,
                        });
                    }
                    continue;
                }
            }
            if segments_intersect(a1, a2, b1, b2) {
                return Err(SolidError::SelfIntersection {
                    first: la,
                    first_segment: ia,
                    second: lb,
                    second_segment: ib,
                });
            }
        }
    }
    Ok(())
}
