//! Slow reference implementations used to check the fast paths.
//!
//! Nothing here calls the transform, interpolation or quadrature code of the
//! engine; everything is single-threaded and deterministic.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::Configuration;
use crate::error::SpectralError;
use crate::grid::{ComplexField, SampleGrid};
use crate::solids::{Boundary, Solid};
use crate::spectral::Spectrum;

/// Largest field the cascade transform accepts.
pub const CASCADE_LIMIT: usize = 1 << 14;

/// Multilinear sample with zero outside the node box; written out per axis
/// so it shares no code with [`ComplexField::sample`].
fn sample_zero_padded(field: &ComplexField, y: &Vector3<f64>) -> Complex64 {
    let g = &field.grid;
    let dims = g.dims();
    let h = g.spacing();
    let o = g.origin();
    let d = g.dim();
    let mut lo = [0i64; 3];
    let mut fr = [0.0f64; 3];
    for a in 0..d {
        let u = (y[a] - o[a]) / h;
        let f = u.floor();
        lo[a] = f as i64;
        fr[a] = u - f;
    }
    let corners = 1usize << d;
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..corners {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..d {
            let up = (c >> a) & 1 == 1;
            let i = lo[a] + up as i64;
            w *= if up { fr[a] } else { 1.0 - fr[a] };
            if i < 0 || i >= dims[a] as i64 {
                inside = false;
            } else {
                idx[a] = i as usize;
            }
        }
        if inside && w != 0.0 {
            acc += field.values[idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])] * w;
        }
    }
    acc
}

/// Riemann sum of `rho1(p) rho2(R^T (p - t)) dV` over the nodes of field 1.
pub fn brute_score(field1: &ComplexField, field2: &ComplexField, config: &Configuration) -> Complex64 {
    let g = &field1.grid;
    let rt: Matrix3<f64> = config.rotation.transpose();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, v) in field1.values.iter().enumerate() {
        if *v == Complex64::new(0.0, 0.0) {
            continue;
        }
        let p = g.node_position(i).coords;
        let y = rt * (p - config.translation);
        acc += v * sample_zero_padded(field2, &y);
    }
    acc * g.cell_volume()
}

/// Direct double-loop transform, DC-centered like the fast path.
pub fn cascade_dft(field: &ComplexField) -> Result<Spectrum, SpectralError> {
    let g = field.grid;
    let m = g.node_count();
    if m > CASCADE_LIMIT {
        return Err(SpectralError::SizeGuard {
            nodes: m,
            limit: CASCADE_LIMIT,
        });
    }
    let dims = g.dims();
    let extent: Vec<f64> = (0..3).map(|a| dims[a] as f64 * g.spacing()).collect();
    let positions: Vec<Vector3<f64>> = (0..m).map(|i| g.node_position(i).coords).collect();
    let mut amplitudes = Vec::with_capacity(m);
    for s in 0..m {
        let ijk = g.unflatten(s);
        let mut w = Vector3::zeros();
        for a in 0..g.dim() {
            w[a] = (ijk[a] as f64 - (dims[a] / 2) as f64) / extent[a];
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (f, p) in field.values.iter().zip(&positions) {
            acc += f * Complex64::from_polar(1.0, -2.0 * PI * w.dot(p));
        }
        amplitudes.push(acc * g.cell_volume());
    }
    Ok(Spectrum { grid: g, amplitudes })
}

const RAY_SEED: u64 = 0x7261_7963_6173_7421;

enum RayOutcome {
    Crossings(usize),
    Degenerate,
}

fn ray_triangle(o: &Vector3<f64>, d: &Vector3<f64>, tri: [Point3<f64>; 3]) -> Option<bool> {
    // Moller-Trumbore; None flags a grazing or edge hit.
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    let scale = e1.norm() * e2.norm();
    let tv = o - tri[0].coords;
    let u = tv.dot(&pv) / det;
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) / det;
    let t = e2.dot(&qv) / det;
    if det.abs() < 1e-12 * scale {
        // Parallel: only a problem if the ray lies in the triangle's plane.
        let n = e1.cross(&e2);
        return if (tv.dot(&n)).abs() < 1e-12 * scale { None } else { Some(false) };
    }
    let eps = 1e-9;
    if t <= 0.0 {
        return Some(false);
    }
    if u < -eps || v < -eps || u + v > 1.0 + eps {
        return Some(false);
    }
    if u < eps || v < eps || u + v > 1.0 - eps {
        return None;
    }
    Some(true)
}

fn ray_segment(o: &Vector3<f64>, d: &Vector3<f64>, a: Point3<f64>, b: Point3<f64>) -> Option<bool> {
    let e = b - a;
    let den = d.x * e.y - d.y * e.x;
    let w = a.coords - o;
    if den.abs() < 1e-12 * e.norm() {
        let side = w.x * d.y - w.y * d.x;
        return if side.abs() < 1e-12 * e.norm() { None } else { Some(false) };
    }
    let t = (w.x * e.y - w.y * e.x) / den;
    let u = (w.x * d.y - w.y * d.x) / den;
    let eps = 1e-9;
    if t <= 0.0 || u < -eps || u > 1.0 + eps {
        return Some(false);
    }
    if u < eps || u > 1.0 - eps {
        return None;
    }
    Some(true)
}

fn cast(solid: &Solid, o: &Vector3<f64>, d: &Vector3<f64>) -> RayOutcome {
    let mut count = 0;
    match solid.boundary() {
        Boundary::Mesh(m) => {
            for f in 0..m.faces().len() {
                match ray_triangle(o, d, m.triangle(f)) {
                    Some(true) => count += 1,
                    Some(false) => {}
                    None => return RayOutcome::Degenerate,
                }
            }
        }
        Boundary::Polygon(poly) => {
            for l in poly.loops() {
                for j in 0..l.len() {
                    let a = Point3::new(l[j].x, l[j].y, 0.0);
                    let b = l[(j + 1) % l.len()];
                    match ray_segment(o, d, a, Point3::new(b.x, b.y, 0.0)) {
                        Some(true) => count += 1,
                        Some(false) => {}
                        None => return RayOutcome::Degenerate,
                    }
                }
            }
        }
    }
    RayOutcome::Crossings(count)
}

/// Crossing parity along three random rays, by majority. Degenerate hits
/// are retried along fresh directions.
pub fn raycast_pmc(solid: &Solid, p: &Point3<f64>) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(RAY_SEED);
    let planar = solid.dimension() == 2;
    let o = if planar { Vector3::new(p.x, p.y, 0.0) } else { p.coords };
    let mut votes = 0;
    let mut cast_rays = 0;
    let mut attempts = 0;
    while cast_rays < 3 {
        attempts += 1;
        assert!(attempts < 1000, "no clean ray from {p:?}");
        let d = if planar {
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            Vector3::new(a.cos(), a.sin(), 0.0)
        } else {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            Vector3::new(r * a.cos(), r * a.sin(), z)
        };
        if let RayOutcome::Crossings(n) = cast(solid, &o, &d) {
            cast_rays += 1;
            votes += n % 2;
        }
    }
    votes >= 2
}

/// Node-count intersection measure: `dV * #{p : p in S1, R^T (p - t) in S2}`
/// over the nodes of `grid`.
pub fn intersection_volume(s1: &Solid, s2: &Solid, config: &Configuration, grid: &SampleGrid) -> f64 {
    let rt = config.rotation.transpose();
    let b1 = s1.bounding_box();
    let b2 = s2.bounding_box();
    let mut count = 0usize;
    for i in 0..grid.node_count() {
        let p = grid.node_position(i);
        if !b1.contains(&p) {
            continue;
        }
        let y = Point3::from(rt * (p.coords - config.translation));
        if !b2.contains(&y) {
            continue;
        }
        if raycast_pmc(s1, &p) && raycast_pmc(s2, &y) {
            count += 1;
        }
    }
    count as f64 * grid.cell_volume()
}

/// Rotations mapping grid nodes to grid nodes: quarter turns about z in 2D,
/// the 24 proper signed permutations in 3D.
pub fn lattice_rotations(dim: usize) -> Vec<Matrix3<f64>> {
    if dim == 2 {
        return (0..4)
            .map(|q| {
                let (s, c) = [(0.0, 1.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 0.0)][q];
                Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
            })
            .collect();
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for signs in 0..8 {
            let m = Matrix3::from_fn(|i, j| {
                if p[i] == j {
                    if signs >> i & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                } else {
                    0.0
                }
            });
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub translation: Vec<Complex64>,
    /// About world axes x, y, z in 3D; about z only in 2D.
    pub rotation: Vec<Complex64>,
}

/// Central difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdScheme {
    /// `(f(+h) - f(-h)) / 2h`, error `O(h^2)`.
    #[default]
    Central3,
    /// `(-f(+2h) + 8 f(+h) - 8 f(-h) + f(-2h)) / 12h`, error `O(h^4)`.
    Central5,
}

fn central<F: Fn(f64) -> Complex64>(f: F, step: f64, scheme: FdScheme) -> Complex64 {
    match scheme {
        FdScheme::Central3 => (f(step) - f(-step)) / (2.0 * step),
        FdScheme::Central5 => (-f(2.0 * step) + f(step) * 8.0 - f(-step) * 8.0 + f(-2.0 * step)) / (12.0 * step),
    }
}

/// Central differences of `scorer` in each translation axis and each
/// rotation axis; rotations perturb as `exp(delta [e]x) R`.
pub fn fd_gradient<F>(scorer: F, config: &Configuration, dim: usize, step_t: f64, step_r: f64, scheme: FdScheme) -> FdGradient
where
    F: Fn(&Configuration) -> Complex64,
{
    FdGradient {
        translation: fd_translation(&scorer, config, dim, step_t, scheme),
        rotation: fd_rotation(&scorer, config, dim, step_r, scheme),
    }
}

pub fn fd_translation<F>(scorer: F, config: &Configuration, dim: usize, step: f64, scheme: FdScheme) -> Vec<Complex64>
where
    F: Fn(&Configuration) -> Complex64,
{
    (0..dim)
        .map(|a| {
            central(
                |d| {
                    let mut c = *config;
                    c.translation[a] += d;
                    scorer(&c)
                },
                step,
                scheme,
            )
        })
        .collect()
}

/// About x, y, z in 3D and z alone in 2D.
pub fn fd_rotation<F>(scorer: F, config: &Configuration, dim: usize, step: f64, scheme: FdScheme) -> Vec<Complex64>
where
    F: Fn(&Configuration) -> Complex64,
{
    let axes: Vec<usize> = if dim == 3 { vec![0, 1, 2] } else { vec![2] };
    axes.into_iter()
        .map(|e| {
            let turn = |angle: f64| {
                let (s, c) = angle.sin_cos();
                let mut m = Matrix3::identity();
                let (i, j) = ((e + 1) % 3, (e + 2) % 3);
                m[(i, i)] = c;
                m[(j, j)] = c;
                m[(i, j)] = -s;
                m[(j, i)] = s;
                scorer(&Configuration {
                    rotation: m * config.rotation,
                    translation: config.translation,
                })
            };
            central(turn, step, scheme)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn lattice_rotation_counts() {
        assert_eq!(lattice_rotations(2).len(), 4);
        let r3 = lattice_rotations(3);
        assert_eq!(r3.len(), 24);
        for r in &r3 {
            assert!((r * r.transpose() - Matrix3::identity()).norm() < 1e-15);
        }
    }

    #[test]
    fn cascade_of_delta_is_flat() {
        let grid = SampleGrid::centered(2, 8, 0.5).unwrap();
        let mut f = ComplexField::zeros(grid);
        f.values[grid.index([4, 4, 0])] = Complex64::new(1.0, 0.0);
        let s = cascade_dft(&f).unwrap();
        for a in &s.amplitudes {
            assert!((a - 0.25).norm() < 1e-15);
        }
    }

    #[test]
    fn cascade_guard() {
        let grid = SampleGrid::centered(3, 32, 0.1).unwrap();
        assert!(matches!(
            cascade_dft(&ComplexField::zeros(grid)),
            Err(SpectralError::SizeGuard { .. })
        ));
    }

    #[test]
    fn cascade_is_linear() {
        let grid = SampleGrid::new(2, [8, 4, 1], [0.2, 0.1, 0.0], 0.3).unwrap();
        let f = ComplexField::from_fn(grid, |p| Complex64::new(p.x, p.y * p.y));
        let g = ComplexField::from_fn(grid, |p| Complex64::new(1.0, -p.x));
        let a = Complex64::new(0.5, 2.0);
        let sum = ComplexField::new(grid, f.values.iter().zip(&g.values).map(|(x, y)| a * x + y).collect());
        let (sf, sg, ss) = (cascade_dft(&f).unwrap(), cascade_dft(&g).unwrap(), cascade_dft(&sum).unwrap());
        for i in 0..grid.node_count() {
            assert!((ss.amplitudes[i] - (a * sf.amplitudes[i] + sg.amplitudes[i])).norm() < 1e-12);
        }
    }

    #[test]
    fn raycast_cube() {
        let cube = shapes::solid(shapes::unit_cube());
        assert!(raycast_pmc(&cube, &Point3::new(0.5, 0.5, 0.5)));
        assert!(!raycast_pmc(&cube, &Point3::new(10.0, 10.0, 10.0)));
        let ring = Solid::from_polygon(shapes::annulus(0.5, 1.0, 24));
        assert!(!raycast_pmc(&ring, &Point3::origin()));
        assert!(raycast_pmc(&ring, &Point3::new(0.75, 0.0, 0.0)));
    }

    #[test]
    fn brute_score_of_disjoint_and_identical() {
        let grid = SampleGrid::centered(2, 16, 0.25).unwrap();
        let f = ComplexField::from_fn(grid, |p| Complex64::new(if p.x.abs() < 0.6 && p.y.abs() < 0.6 { 1.0 } else { 0.0 }, 0.0));
        // 5 x 5 nodes inside.
        let same = brute_score(&f, &f, &Configuration::identity());
        assert!((same.re - 25.0 * 0.0625).abs() < 1e-12);
        let far = brute_score(&f, &f, &Configuration::planar(0.0, 1.5, 0.0));
        assert_eq!(far, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn fd_of_constant_and_quadratic() {
        let c = Configuration::planar(0.3, 0.2, -0.1);
        for scheme in [FdScheme::Central3, FdScheme::Central5] {
            let g = fd_gradient(|_| Complex64::new(2.0, 1.0), &c, 2, 1e-3, 1e-3, scheme);
            assert!(g.translation.iter().chain(&g.rotation).all(|v| v.norm() == 0.0));
            let quad = |k: &Configuration| {
                let t = k.translation;
                Complex64::new(t.x * t.x + 3.0 * t.y, k.theta() * k.theta())
            };
            let g = fd_gradient(quad, &c, 2, 1e-4, 1e-4, scheme);
            assert!((g.translation[0].re - 0.4).abs() < 1e-8);
            assert!((g.translation[1].re - 3.0).abs() < 1e-8);
            assert!((g.rotation[0].im - 0.6).abs() < 1e-8);
        }
        // Quartic: the five-point stencil is exact up to rounding, the
        // three-point one is off by h^2.
        let quartic = |k: &Configuration| Complex64::new(k.translation.x.powi(4), 0.0);
        let at = Configuration::planar(0.0, 1.0, 0.0);
        let g3 = fd_gradient(quartic, &at, 2, 1e-2, 1e-2, FdScheme::Central3);
        let g5 = fd_gradient(quartic, &at, 2, 1e-2, 1e-2, FdScheme::Central5);
        assert!((g3.translation[0].re - 4.0 - 4e-4).abs() < 1e-10);
        assert!((g5.translation[0].re - 4.0).abs() < 1e-10);
    }
}
