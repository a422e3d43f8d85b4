//! Skeletal density and winding-number fields by adaptive boundary quadrature.
//!
//! Every boundary element is split until it subtends at most
//! `max_solid_angle` from the query point. Each piece contributes
//! `phi(zeta) * eta^2 * d_gamma`, with `d_gamma` the exact signed solid angle
//! (planar angle in 2D) of the piece and `eta` the distance to its centroid,
//! so the inverse-square kernel reproduces the winding number exactly.

use std::f64::consts::PI;

use nalgebra::{Point2, Point3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DescriptorError;
use crate::grid::{ComplexField, SampleGrid, VectorField};
use crate::solids::{Boundary, Solid};

/// Normalized Gaussian `exp(-x^2 / 2 sigma^2) / (sqrt(2 pi) sigma)`.
pub fn gaussian(x: f64, sigma: f64) -> f64 {
    let u = x / sigma;
    (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `c / eta^2`: integrates to the winding number.
    InverseSquare,
    /// `lambda c g_sigma(|tan angle zeta| - 1) / zeta^2` with `lambda = +lambda_in`
    /// inside and `-lambda_out` outside.
    SkeletalDensity,
    /// Real form `lambda c g_sigma(|tan angle zeta| - 1) / eta^2`, same
    /// coefficients. Tends to `lambda_in g_sigma(0)` times the indicator as
    /// sigma grows.
    RealSkeletal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma: f64,
    pub lambda_in: f64,
    pub lambda_out: f64,
}

impl KernelSpec {
    /// Affinity kernel with `lambda_in = 1` and `lambda_out = penalty`.
    pub fn skeletal(sigma: f64, penalty: f64) -> Self {
        Self {
            family: KernelFamily::SkeletalDensity,
            sigma,
            lambda_in: 1.0,
            lambda_out: penalty,
        }
    }

    pub fn real_skeletal(sigma: f64, penalty: f64) -> Self {
        Self {
            family: KernelFamily::RealSkeletal,
            ..Self::skeletal(sigma, penalty)
        }
    }

    pub fn inverse_square() -> Self {
        Self {
            family: KernelFamily::InverseSquare,
            sigma: 1.0,
            lambda_in: 1.0,
            lambda_out: 1.0,
        }
    }

    /// Penalty factor `lambda_out / lambda_in`.
    pub fn penalty(&self) -> f64 {
        self.lambda_out / self.lambda_in
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("lambda_in", self.lambda_in),
            ("lambda_out", self.lambda_out),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DescriptorError::InvalidKernel(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationPolicy {
    /// Largest angle (sr in 3D, rad in 2D) a quadrature piece may subtend.
    pub max_solid_angle: f64,
    pub max_recursion_depth: u32,
    /// Nodes closer than `eta_floor * h` to the boundary are excluded.
    pub eta_floor: f64,
}

impl Default for IntegrationPolicy {
    fn default() -> Self {
        Self {
            max_solid_angle: 0.02,
            max_recursion_depth: 16,
            eta_floor: 0.25,
        }
    }
}

impl IntegrationPolicy {
    pub fn validate(&self) -> Result<(), DescriptorError> {
        if !(self.max_solid_angle > 0.0 && self.max_solid_angle <= 4.0 * PI) {
            return Err(DescriptorError::InvalidPolicy(format!(
                "max_solid_angle = {}",
                self.max_solid_angle
            )));
        }
        if self.max_recursion_depth == 0 || self.max_recursion_depth > 24 {
            return Err(DescriptorError::InvalidPolicy(format!(
                "max_recursion_depth = {}",
                self.max_recursion_depth
            )));
        }
        if !(self.eta_floor > 0.0) {
            return Err(DescriptorError::InvalidPolicy(format!("eta_floor = {}", self.eta_floor)));
        }
        Ok(())
    }
}

/// `zeta = xi + i eta` for one (query, boundary point) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryProjection {
    /// Signed distance from the boundary: negative inside.
    pub xi: f64,
    /// Distance from the query point to the boundary point.
    pub eta: f64,
}

impl BoundaryProjection {
    pub fn zeta(&self) -> Complex64 {
        Complex64::new(self.xi, self.eta)
    }
}

/// Angular normalization: `1/4pi` in 3D, `1/2pi` in 2D.
pub fn kernel_constant(dim: usize) -> f64 {
    if dim == 3 {
        1.0 / (4.0 * PI)
    } else {
        1.0 / (2.0 * PI)
    }
}

/// Point evaluation of the kernel `phi(zeta)`.
pub fn kernel_eval(spec: &KernelSpec, proj: BoundaryProjection, inside: bool, dim: usize) -> Complex64 {
    let c = kernel_constant(dim);
    match spec.family {
        KernelFamily::InverseSquare => Complex64::new(c / (proj.eta * proj.eta), 0.0),
        KernelFamily::SkeletalDensity => {
            let lambda = if inside { spec.lambda_in } else { -spec.lambda_out };
            let g = gaussian(proj.eta / proj.xi.abs() - 1.0, spec.sigma);
            let z = proj.zeta();
            (lambda * c * g) / (z * z)
        }
        KernelFamily::RealSkeletal => {
            let lambda = if inside { spec.lambda_in } else { -spec.lambda_out };
            let g = gaussian(proj.eta / proj.xi.abs() - 1.0, spec.sigma);
            Complex64::new(lambda * c * g / (proj.eta * proj.eta), 0.0)
        }
    }
}

/// Raw quadrature sums for one query point.
#[derive(Debug, Clone, Copy, Default)]
struct NodeSums {
    /// Sum of signed angles (4 pi or 2 pi inside a closed boundary).
    angle: f64,
    /// Sum of `g(eta/|xi| - 1) eta^2 / (|xi| + i eta)^2 d_gamma`: the exterior form.
    skeletal: Complex64,
    /// Sum of `g(eta/|xi| - 1) d_gamma`.
    skeletal_real: f64,
    min_eta: f64,
    samples: usize,
    max_depth: u32,
    /// Largest angle still above threshold when the depth budget ran out.
    residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    Winding,
    Complex(f64),
    Real(f64),
}

impl Form {
    fn of(spec: &KernelSpec) -> Self {
        match spec.family {
            KernelFamily::InverseSquare => Form::Winding,
            KernelFamily::SkeletalDensity => Form::Complex(spec.sigma),
            KernelFamily::RealSkeletal => Form::Real(spec.sigma),
        }
    }
}

struct Integrator {
    xi_abs: f64,
    form: Form,
    threshold: f64,
    max_depth: u32,
    sums: NodeSums,
}

impl Integrator {
    fn new(xi_abs: f64, form: Form, policy: &IntegrationPolicy) -> Self {
        Self {
            xi_abs,
            form,
            threshold: policy.max_solid_angle,
            max_depth: policy.max_recursion_depth,
            sums: NodeSums {
                min_eta: f64::INFINITY,
                ..Default::default()
            },
        }
    }

    #[inline]
    fn accumulate(&mut self, eta: f64, d_gamma: f64, depth: u32) {
        let s = &mut self.sums;
        s.angle += d_gamma;
        s.samples += 1;
        s.max_depth = s.max_depth.max(depth);
        s.min_eta = s.min_eta.min(eta);
        match self.form {
            Form::Winding => {}
            Form::Complex(sigma) => {
                let u = (eta / self.xi_abs - 1.0) / sigma;
                if u < 40.0 {
                    let g = (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * sigma);
                    let d = self.xi_abs;
                    let (d2, e2) = (d * d, eta * eta);
                    let r2 = d2 + e2;
                    // eta^2 / (d + i eta)^2 = eta^2 (d^2 - eta^2 - 2 i d eta) / |z|^4
                    let scale = g * d_gamma * e2 / (r2 * r2);
                    s.skeletal += Complex64::new((d2 - e2) * scale, -2.0 * d * eta * scale);
                }
            }
            Form::Real(sigma) => {
                let u = (eta / self.xi_abs - 1.0) / sigma;
                if u < 40.0 {
                    s.skeletal_real += (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * sigma) * d_gamma;
                }
            }
        }
    }

    fn triangle(&mut self, p: &Point3<f64>, a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, depth: u32) {
        let (ra, rb, rc) = (a - p, b - p, c - p);
        let omega = solid_angle(&ra, &rb, &rc);
        if omega.abs() > self.threshold {
            if depth < self.max_depth {
                let ab = nalgebra::center(&a, &b);
                let bc = nalgebra::center(&b, &c);
                let ca = nalgebra::center(&c, &a);
                self.triangle(p, a, ab, ca, depth + 1);
                self.triangle(p, ab, b, bc, depth + 1);
                self.triangle(p, ca, bc, c, depth + 1);
                self.triangle(p, ab, bc, ca, depth + 1);
                return;
            }
            self.sums.residual = self.sums.residual.max(omega.abs());
        }
        let eta = ((ra + rb + rc) / 3.0).norm();
        self.accumulate(eta, omega, depth);
    }

    fn segment(&mut self, p: &Point2<f64>, a: Point2<f64>, b: Point2<f64>, depth: u32) {
        let (ra, rb) = (a - p, b - p);
        let angle = (ra.x * rb.y - ra.y * rb.x).atan2(ra.dot(&rb));
        if angle.abs() > self.threshold {
            if depth < self.max_depth {
                let m = nalgebra::center(&a, &b);
                self.segment(p, a, m, depth + 1);
                self.segment(p, m, b, depth + 1);
                return;
            }
            self.sums.residual = self.sums.residual.max(angle.abs());
        }
        let eta = ((ra + rb) * 0.5).norm();
        self.accumulate(eta, angle, depth);
    }
}

/// Signed solid angle of triangle `(a, b, c)` (relative to the viewer),
/// positive when the viewer is behind the counterclockwise face.
pub fn solid_angle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * num.atan2(den)
}

fn integrate(solid: &Solid, p: &Point3<f64>, xi_abs: f64, form: Form, policy: &IntegrationPolicy) -> NodeSums {
    let mut it = Integrator::new(xi_abs, form, policy);
    match solid.boundary() {
        Boundary::Mesh(m) => {
            for f in 0..m.faces().len() {
                let [a, b, c] = m.triangle(f);
                it.triangle(p, a, b, c, 0);
            }
        }
        Boundary::Polygon(poly) => {
            let q = Point2::new(p.x, p.y);
            for (a, b) in poly.segments() {
                it.segment(&q, a, b, 0);
            }
        }
    }
    it.sums
}

/// Winding number of `p` by adaptive quadrature of the inverse-square kernel.
pub fn point_membership(solid: &Solid, p: &Point3<f64>, policy: &IntegrationPolicy) -> Result<f64, DescriptorError> {
    policy.validate()?;
    let dist = solid.unsigned_distance(p);
    let floor = 1e-12 * solid.bounding_box().diagonal();
    if dist <= floor {
        return Err(DescriptorError::OnBoundary { distance: dist, floor });
    }
    let sums = integrate(solid, p, dist, Form::Winding, policy);
    if sums.residual > 0.0 {
        return Err(DescriptorError::RecursionExhausted {
            depth: policy.max_recursion_depth,
            residual_angle: sums.residual,
        });
    }
    Ok(sums.angle * kernel_constant(solid.dimension()))
}

/// Instrumented single-point evaluation of the descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEvaluation {
    pub value: Complex64,
    pub winding: f64,
    /// Signed distance, negative inside.
    pub xi: f64,
    /// Signed coefficient applied to the skeletal sum (`+lambda_in` / `-lambda_out`).
    pub coefficient: f64,
    /// Smallest `eta` over all quadrature pieces.
    pub min_eta: f64,
    pub samples: usize,
    pub max_depth: u32,
    /// Nonzero when the recursion budget ran out.
    pub residual_angle: f64,
}

pub fn evaluate_point(solid: &Solid, p: &Point3<f64>, spec: &KernelSpec, policy: &IntegrationPolicy) -> PointEvaluation {
    let dim = solid.dimension();
    let c = kernel_constant(dim);
    let dist = solid.unsigned_distance(p);
    let sums = integrate(solid, p, dist, Form::of(spec), policy);
    let winding = sums.angle * c;
    let inside = winding >= 0.5;
    let (value, coefficient) = match spec.family {
        KernelFamily::InverseSquare => (Complex64::new(winding, 0.0), 1.0),
        KernelFamily::SkeletalDensity => {
            // Interior zeta = -|xi| + i eta = -conj(|xi| + i eta), so the
            // interior sum is the conjugate of the exterior form.
            let (lambda, s) = if inside {
                (spec.lambda_in, sums.skeletal.conj())
            } else {
                (-spec.lambda_out, sums.skeletal)
            };
            (s * (lambda * c), lambda)
        }
        KernelFamily::RealSkeletal => {
            let lambda = if inside { spec.lambda_in } else { -spec.lambda_out };
            (Complex64::new(lambda * c * sums.skeletal_real, 0.0), lambda)
        }
    };
    PointEvaluation {
        value,
        winding,
        xi: if inside { -dist } else { dist },
        coefficient,
        min_eta: sums.min_eta,
        samples: sums.samples,
        max_depth: sums.max_depth,
        residual_angle: sums.residual,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadratureStats {
    pub samples: usize,
    pub max_depth: u32,
}

/// A descriptor field plus the nodes that needed special handling.
#[derive(Debug, Clone)]
pub struct AffinityField {
    pub field: ComplexField,
    /// Nodes within `eta_floor * h` of the boundary; their values are neighbor averages.
    pub boundary_nodes: Vec<usize>,
    /// Nodes whose quadrature exhausted the recursion budget, with the residual angle.
    pub exhausted_nodes: Vec<(usize, f64)>,
    pub stats: QuadratureStats,
}

fn check_inputs(solid: &Solid, grid: &SampleGrid, policy: &IntegrationPolicy) -> Result<(), DescriptorError> {
    policy.validate()?;
    if grid.dim() != solid.dimension() {
        return Err(DescriptorError::DimensionMismatch {
            grid: grid.dim(),
            solid: solid.dimension(),
        });
    }
    if !grid.contains_with_margin(&solid.bounding_box(), 2.0 * grid.spacing() * (1.0 - 1e-9)) {
        return Err(DescriptorError::InvalidGrid(
            "grid must contain the solid's bounding box with a margin of 2h".into(),
        ));
    }
    Ok(())
}

enum NodeResult {
    Value(Complex64, f64, usize, u32),
    Boundary,
}

fn evaluate_node(solid: &Solid, grid: &SampleGrid, spec: &KernelSpec, policy: &IntegrationPolicy, i: usize) -> NodeResult {
    let p = grid.node_position(i);
    if solid.unsigned_distance(&p) < policy.eta_floor * grid.spacing() {
        return NodeResult::Boundary;
    }
    let e = evaluate_point(solid, &p, spec, policy);
    NodeResult::Value(e.value, e.residual_angle, e.samples, e.max_depth)
}

/// Descriptor samples over `grid`, evaluated in parallel over nodes.
pub fn affinity_field(
    solid: &Solid,
    grid: &SampleGrid,
    spec: &KernelSpec,
    policy: &IntegrationPolicy,
) -> Result<AffinityField, DescriptorError> {
    spec.validate()?;
    check_inputs(solid, grid, policy)?;
    let results: Vec<NodeResult> = (0..grid.node_count())
        .into_par_iter()
        .map(|i| evaluate_node(solid, grid, spec, policy, i))
        .collect();
    Ok(assemble(grid, results))
}

/// Same as [`affinity_field`], split into `partitions` contiguous node ranges
/// evaluated independently. Output does not depend on `partitions`.
pub fn affinity_field_partitioned(
    solid: &Solid,
    grid: &SampleGrid,
    spec: &KernelSpec,
    policy: &IntegrationPolicy,
    partitions: usize,
) -> Result<AffinityField, DescriptorError> {
    spec.validate()?;
    check_inputs(solid, grid, policy)?;
    let m = grid.node_count();
    let parts = partitions.clamp(1, m);
    let chunk = m.div_ceil(parts);
    let pieces: Vec<Vec<NodeResult>> = (0..parts)
        .into_par_iter()
        .map(|k| {
            (k * chunk..((k + 1) * chunk).min(m))
                .map(|i| evaluate_node(solid, grid, spec, policy, i))
                .collect()
        })
        .collect();
    Ok(assemble(grid, pieces.into_iter().flatten().collect()))
}

fn assemble(grid: &SampleGrid, results: Vec<NodeResult>) -> AffinityField {
    let zero = Complex64::new(0.0, 0.0);
    let mut values = vec![zero; results.len()];
    let mut known = vec![true; results.len()];
    let mut boundary_nodes = Vec::new();
    let mut exhausted_nodes = Vec::new();
    let mut stats = QuadratureStats::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            NodeResult::Value(v, residual, samples, depth) => {
                values[i] = v;
                stats.samples += samples;
                stats.max_depth = stats.max_depth.max(depth);
                if residual > 0.0 {
                    exhausted_nodes.push((i, residual));
                }
            }
            NodeResult::Boundary => {
                known[i] = false;
                boundary_nodes.push(i);
            }
        }
    }
    fill_from_neighbors(grid, &mut values, &mut known, &boundary_nodes);
    AffinityField {
        field: ComplexField::new(*grid, values),
        boundary_nodes,
        exhausted_nodes,
        stats,
    }
}

/// Replaces excluded nodes by the mean of their known face neighbors, in
/// passes; a pass only reads values finalized by earlier passes.
fn fill_from_neighbors(grid: &SampleGrid, values: &mut [Complex64], known: &mut [bool], pending: &[usize]) {
    let mut pending: Vec<usize> = pending.to_vec();
    while !pending.is_empty() {
        let mut filled = Vec::new();
        let mut rest = Vec::new();
        for &i in &pending {
            let (sum, n) = grid
                .neighbors(i)
                .filter(|&j| known[j])
                .fold((Complex64::new(0.0, 0.0), 0usize), |(s, n), j| (s + values[j], n + 1));
            if n > 0 {
                filled.push((i, sum / n as f64));
            } else {
                rest.push(i);
            }
        }
        if filled.is_empty() {
            // Isolated from every known node: leave at zero.
            break;
        }
        for (i, v) in filled {
            values[i] = v;
            known[i] = true;
        }
        pending = rest;
    }
}

/// `1 + 0i` where the winding number is at least one half, else zero.
pub fn indicator_field(solid: &Solid, grid: &SampleGrid, policy: &IntegrationPolicy) -> Result<ComplexField, DescriptorError> {
    check_inputs(solid, grid, policy)?;
    let c = kernel_constant(solid.dimension());
    let values = (0..grid.node_count())
        .into_par_iter()
        .map(|i| {
            let p = grid.node_position(i);
            let dist = solid.unsigned_distance(&p);
            if dist == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let w = integrate(solid, &p, dist, Form::Winding, policy).angle * c;
            Complex64::new(if w >= 0.5 { 1.0 } else { 0.0 }, 0.0)
        })
        .collect();
    Ok(ComplexField::new(*grid, values))
}

/// `rho(p) * p_k` for each active axis `k`, using node coordinates.
pub fn vector_density(field: &ComplexField) -> VectorField {
    let grid = field.grid;
    let components = (0..grid.dim())
        .map(|k| {
            let values = field
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| v * grid.node_position(i)[k])
                .collect();
            ComplexField::new(grid, values)
        })
        .collect();
    VectorField { components }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube() -> Solid {
        Solid::from_mesh(shapes::unit_cube())
    }

    #[test]
    fn gaussian_values() {
        assert!((gaussian(0.0, 1.0) - 0.3989422804014327).abs() < 1e-12);
        let s = 0.7;
        let expected = (-0.5f64).exp() / ((2.0 * PI).sqrt() * s);
        assert!((gaussian(s, s) - expected).abs() < 1e-15);
        // Direct evaluation: e^-8 / (sqrt(2 pi) 0.5).
        let g = gaussian(2.0, 0.5);
        assert!((g - 2.6766e-4).abs() < 1e-7, "{g}");
    }

    #[test]
    fn kernel_eval_examples() {
        let inv = KernelSpec::inverse_square();
        let v = kernel_eval(&inv, BoundaryProjection { xi: 0.3, eta: 1.0 }, true, 3);
        assert!((v.re - 1.0 / (4.0 * PI)).abs() < 1e-15 && v.im == 0.0);

        let spec = KernelSpec::skeletal(0.5, 3.0);
        // Exact nearest neighbour: eta = |xi| puts the Gaussian at its peak.
        let peak = kernel_eval(&spec, BoundaryProjection { xi: -1.0, eta: 1.0 }, true, 3);
        let z = Complex64::new(-1.0, 1.0);
        let expected = gaussian(0.0, 0.5) / (4.0 * PI) / (z * z);
        assert!((peak - expected).norm() < 1e-15);
        for eta in [1.01, 1.3, 2.0] {
            let proj = BoundaryProjection { xi: -1.0, eta };
            let v = kernel_eval(&spec, proj, true, 3) * (proj.zeta() * proj.zeta());
            assert!(v.norm() < (peak * z * z).norm());
        }
        // |tan| - 1 = 1.5 at sigma = 0.5 gives exp(-4.5) relative to the peak.
        let off = BoundaryProjection { xi: 1.0, eta: 2.5 };
        let ratio = gaussian(off.eta / off.xi - 1.0, 0.5) / gaussian(0.0, 0.5);
        assert!((ratio - (-4.5f64).exp()).abs() < 1e-15);
        assert!((ratio - 1.11e-2).abs() < 1e-4);
        let outside = kernel_eval(&spec, off, false, 3);
        let z = off.zeta();
        let expected = -3.0 * gaussian(1.5, 0.5) / (4.0 * PI) / (z * z);
        assert!((outside - expected).norm() < 1e-15);
    }

    #[test]
    fn integrator_matches_kernel_eval() {
        // The quadrature works with phi * eta^2; check against the point kernel.
        let spec = KernelSpec::skeletal(0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d: f64 = rng.gen_range(0.1..2.0);
            let eta = d * rng.gen_range(1.0..4.0);
            let policy = IntegrationPolicy::default();
            let mut it = Integrator::new(d, Form::of(&spec), &policy);
            it.accumulate(eta, 1.0, 0);
            let direct = kernel_eval(&spec, BoundaryProjection { xi: d, eta }, false, 2)
                * (-(eta * eta) * 2.0 * PI);
            assert!((it.sums.skeletal - direct).norm() < 1e-12 * direct.norm().max(1e-30));
            let real = KernelSpec::real_skeletal(0.5, 1.0);
            let mut it = Integrator::new(d, Form::of(&real), &policy);
            it.accumulate(eta, 1.0, 0);
            let direct = kernel_eval(&real, BoundaryProjection { xi: d, eta }, true, 2) * (eta * eta * 2.0 * PI);
            assert!((it.sums.skeletal_real - direct.re).abs() < 1e-12 * direct.re.abs().max(1e-30));
        }
    }

    #[test]
    fn cube_winding() {
        let policy = IntegrationPolicy::default();
        let w = point_membership(&cube(), &Point3::new(0.5, 0.5, 0.5), &policy).unwrap();
        assert!((w - 1.0).abs() < 1e-9);
        let w = point_membership(&cube(), &Point3::new(10.0, 10.0, 10.0), &policy).unwrap();
        assert!(w.abs() < 1e-9);
        let w = point_membership(&cube(), &Point3::new(0.999, 0.5, 0.2), &policy).unwrap();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn membership_on_boundary_is_error() {
        let err = point_membership(&cube(), &Point3::new(1.0, 0.5, 0.5), &IntegrationPolicy::default());
        assert!(matches!(err, Err(DescriptorError::OnBoundary { .. })));
    }

    #[test]
    fn exhausted_budget_reports_residual() {
        let policy = IntegrationPolicy {
            max_solid_angle: 1e-4,
            max_recursion_depth: 2,
            eta_floor: 0.25,
        };
        match point_membership(&cube(), &Point3::new(0.5, 0.5, 0.5), &policy) {
            Err(DescriptorError::RecursionExhausted { residual_angle, depth }) => {
                assert_eq!(depth, 2);
                assert!(residual_angle > 1e-4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn policy_and_kernel_validation() {
        assert!(KernelSpec::skeletal(0.0, 3.0).validate().is_err());
        assert!(KernelSpec::skeletal(0.5, -1.0).validate().is_err());
        assert_eq!(KernelSpec::skeletal(0.5, 3.0).penalty(), 3.0);
        let bad = IntegrationPolicy {
            max_recursion_depth: 25,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn planar_winding() {
        let sq = Solid::from_polygon(shapes::square(1.0));
        let policy = IntegrationPolicy::default();
        let w = point_membership(&sq, &Point3::new(0.3, 0.6, 0.0), &policy).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        let w = point_membership(&sq, &Point3::new(1.3, 0.6, 0.0), &policy).unwrap();
        assert!(w.abs() < 1e-12);
        let ring = Solid::from_polygon(shapes::annulus(0.5, 1.0, 32));
        let w = point_membership(&ring, &Point3::origin(), &policy).unwrap();
        assert!(w.abs() < 1e-12);
    }

    #[test]
    fn indicator_volume_of_cube() {
        let grid = SampleGrid::new(3, [32, 32, 32], [-0.5, -0.5, -0.5], 1.0 / 16.0).unwrap();
        let f = indicator_field(&cube(), &grid, &IntegrationPolicy::default()).unwrap();
        let volume: f64 = f.values.iter().map(|v| v.re).sum::<f64>() * grid.cell_volume();
        // One boundary-cell shell: surface area 6 times h.
        assert!((volume - 1.0).abs() <= 6.0 / 16.0, "{volume}");
        // Margin nodes are empty.
        assert_eq!(f.values[0].re, 0.0);
        assert_eq!(f.values[grid.node_count() - 1].re, 0.0);
    }

    #[test]
    fn sign_structure_and_eta_bound() {
        let s = Solid::from_polygon(shapes::rectangle(Point2::new(-1.0, -0.3), Point2::new(1.0, 0.3)));
        let spec = KernelSpec::skeletal(0.5, 3.0);
        let policy = IntegrationPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let p = Point3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5), 0.0);
            if s.unsigned_distance(&p) < 1e-3 {
                continue;
            }
            let e = evaluate_point(&s, &p, &spec, &policy);
            assert!(e.min_eta >= e.xi.abs() - 1e-12);
            if e.winding > 0.5 {
                assert_eq!(e.coefficient, 1.0);
                assert!(e.xi < 0.0);
            } else {
                assert_eq!(e.coefficient, -3.0);
                assert!(e.xi > 0.0);
            }
        }
    }

    #[test]
    fn vector_density_examples() {
        let grid = SampleGrid::centered(2, 8, 0.5).unwrap();
        let f = ComplexField::from_fn(grid, |_| Complex64::new(1.0, 0.0));
        let v = vector_density(&f);
        for i in 0..grid.node_count() {
            let p = grid.node_position(i);
            assert_eq!(v.components[0].values[i].re, p.x);
            assert_eq!(v.components[1].values[i].re, p.y);
        }
        let origin = grid.index([4, 4, 0]);
        let f = ComplexField::from_fn(grid, |p| Complex64::new(3.0 + p.x, -2.0));
        let v = vector_density(&f);
        assert_eq!(v.components[0].values[origin], Complex64::new(0.0, 0.0));
        assert_eq!(v.components[1].values[origin], Complex64::new(0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let i = rng.gen_range(0..grid.node_count());
            let p = grid.node_position(i);
            let rho = Complex64::new(3.0 + p.x, -2.0);
            assert_eq!(v.components[0].values[i], rho * p.x);
            assert_eq!(v.components[1].values[i], rho * p.y);
        }
    }

    fn peg() -> Solid {
        Solid::from_polygon(shapes::rectangle(
            nalgebra::Point2::new(-0.7, -0.4),
            nalgebra::Point2::new(0.9, 0.3),
        ))
    }

    #[test]
    fn field_moves_with_the_solid() {
        let grid = SampleGrid::centered(2, 32, 0.125).unwrap();
        let spec = KernelSpec::skeletal(0.5, 3.0);
        let pol = IntegrationPolicy::default();
        let s = peg();
        let base = affinity_field(&s, &grid, &spec, &pol).unwrap().field;
        // Shift by whole cells, then a quarter turn; both map nodes to nodes.
        let shift = Vector3::new(3.0 * 0.125, -2.0 * 0.125, 0.0);
        let moved = affinity_field(&s.transformed(&nalgebra::Matrix3::identity(), &shift), &grid, &spec, &pol).unwrap().field;
        let quarter = crate::spectral::planar_rotation(std::f64::consts::FRAC_PI_2);
        let turned = affinity_field(&s.transformed(&quarter, &Vector3::zeros()), &grid, &spec, &pol).unwrap().field;
        let mut checked = 0;
        for i in 0..grid.node_count() {
            let [x, y, _] = grid.unflatten(i);
            let (x, y) = (x as i64, y as i64);
            if (4..28).contains(&x) && (4..28).contains(&y) {
                let j = grid.index([(x + 3) as usize, (y - 2) as usize, 0]);
                assert!((base.values[i] - moved.values[j]).norm() < 1e-9, "shift at {i}");
                let k = grid.index([(32 - y) as usize, x as usize, 0]);
                assert!((base.values[i] - turned.values[k]).norm() < 1e-9, "turn at {i}");
                checked += 1;
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn interior_magnitude_peaks_on_the_medial_axis() {
        let s = Solid::from_polygon(shapes::rectangle(
            nalgebra::Point2::new(-2.0, -0.25),
            nalgebra::Point2::new(2.0, 0.25),
        ));
        let spec = KernelSpec::skeletal(0.5, 3.0);
        let pol = IntegrationPolicy::default();
        let at = |y: f64| evaluate_point(&s, &Point3::new(0.0, y, 0.0), &spec, &pol).value.norm();
        let center = at(0.0);
        for y in [0.05, 0.1, 0.15, 0.2, -0.1, -0.2] {
            assert!(at(y) < center, "{y}: {} vs {center}", at(y));
        }
    }

    #[test]
    fn quadrature_converges_under_refinement() {
        let s = peg();
        let spec = KernelSpec::skeletal(0.5, 3.0);
        let p = Point3::new(0.2, 0.05, 0.0);
        let value = |gamma: f64| {
            let pol = IntegrationPolicy {
                max_solid_angle: gamma,
                ..IntegrationPolicy::default()
            };
            evaluate_point(&s, &p, &spec, &pol).value
        };
        let v: Vec<Complex64> = [0.08, 0.04, 0.02, 0.01, 0.005].into_iter().map(value).collect();
        let diffs: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        for w in diffs.windows(2) {
            assert!(w[1] < w[0], "{diffs:?}");
        }
        assert!(diffs[3] < 1e-3 * v[4].norm(), "{diffs:?}");
    }

    #[test]
    fn partitioning_does_not_change_the_field() {
        let grid = SampleGrid::centered(2, 16, 0.25).unwrap();
        let spec = KernelSpec::skeletal(0.5, 3.0);
        let pol = IntegrationPolicy::default();
        let s = peg();
        let whole = affinity_field(&s, &grid, &spec, &pol).unwrap();
        for parts in [1, 3, 7, 1000] {
            let split = affinity_field_partitioned(&s, &grid, &spec, &pol, parts).unwrap();
            assert_eq!(whole.field.values, split.field.values);
            assert_eq!(whole.boundary_nodes, split.boundary_nodes);
        }
    }
}
