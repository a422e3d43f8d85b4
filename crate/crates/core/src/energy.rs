//! Score, energy, force and torque for a fixed part and a moving part.
//!
//! The moving part is placed by `x = R y + t` (`y` in its model frame). The
//! score is `sum_k F1(w_k) F2(-R^T w_k) exp(2 pi i w_k . t) dOmega`, summed
//! directly for one configuration or inverse-transformed over all grid
//! translations at once.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Rotation3, Unit, UnitQuaternion, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{EnergyError, SpectralError};
use crate::grid::{ComplexField, SampleGrid};
use crate::solids::Aabb;
use crate::spectral::{
    self, check_rotation, frequency_cell, inverse_dft, FrequencyMap, ModeSelection, Sampler, Spectrum,
    TruncatedSpectrum, VectorSpectrum,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative rigid motion of the moving part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Configuration {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, dim: usize) -> Result<Self, SpectralError> {
        check_rotation(&rotation, dim)?;
        let translation = if dim == 2 {
            Vector3::new(translation.x, translation.y, 0.0)
        } else {
            translation
        };
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn planar(theta: f64, x: f64, y: f64) -> Self {
        Self {
            rotation: spectral::planar_rotation(theta),
            translation: Vector3::new(x, y, 0.0),
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, t: Vector3<f64>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: t,
        }
    }

    /// Planar angle (meaningful for rotations about z).
    pub fn theta(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Rotated by `angle` about the world axis `axis` through the moving part's origin.
    pub fn rotated_about(&self, axis: usize, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::ith(axis, 1.0)), angle);
        Self {
            rotation: rot.into_inner() * self.rotation,
            translation: self.translation,
        }
    }

    /// Projects the rotation back onto SO(3) (polar decomposition via SVD).
    pub fn reorthonormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self {
            rotation: r,
            translation: self.translation,
        }
    }
}

/// Precomputed spectra of one part.
#[derive(Debug, Clone)]
pub struct PartAsset {
    pub id: String,
    /// Model-frame bounding box of the solid.
    pub bbox: Aabb,
    pub spectrum: Spectrum,
    /// Spectra of `rho(p) p_k`; present for movable parts.
    pub vector: Option<VectorSpectrum>,
}

impl PartAsset {
    /// Transforms a descriptor field; `movable` adds the vector spectrum.
    pub fn from_field(id: impl Into<String>, field: &ComplexField, bbox: Aabb, movable: bool) -> Result<Self, SpectralError> {
        let spectrum = spectral::forward_dft(field)?;
        let vector = if movable {
            Some(spectral::forward_vector(&crate::descriptor::vector_density(field))?)
        } else {
            None
        };
        Ok(Self {
            id: id.into(),
            bbox,
            spectrum,
            vector,
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.spectrum.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEval {
    pub score: Complex64,
    /// `-Re score`.
    pub energy: f64,
    /// `+Re` of the translational gradient (unused axes zero).
    pub force: [f64; 3],
    /// `+Re` of the rotational gradient about world axes through the moving
    /// part's origin; planar scenes use only `torque[2]`.
    pub torque: [f64; 3],
    pub eval_time_us: f64,
    pub modes_used: usize,
    /// The moved support leaves the fixed part's grid box.
    pub wrapped: bool,
}

/// Gradient of the score at one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreGradient {
    pub score: Complex64,
    pub translation: [Complex64; 3],
    pub rotation: [Complex64; 3],
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    /// Integer frequency on the fixed grid.
    k: [f64; 3],
    /// Physical frequency.
    omega: Vector3<f64>,
    amp: Complex64,
    wpos: [usize; 3],
}

/// How the moving part's spectrum is read at rotated frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralSampling {
    /// Multilinear interpolation of the stored window (real-time path).
    #[default]
    Multilinear,
    /// Exact transform of the sampled moving field at each rotated
    /// frequency; `O(m)` per mode, for verification and offline use.
    Direct,
}

/// Spatial samples of the moving part for [`SpectralSampling::Direct`].
#[derive(Debug, Clone)]
struct DirectFields {
    grid: SampleGrid,
    /// Scalar field followed by the vector-density components.
    fields: Vec<Vec<Complex64>>,
}

impl DirectFields {
    /// `dV sum_p f(p) exp(-2 pi i nu . p)` for every stored field.
    fn sample(&self, nu: &Vector3<f64>, scratch: &mut [Vec<Complex64>; 3], out: &mut [Complex64; 4]) {
        let g = &self.grid;
        let dims = g.dims();
        let o = g.origin();
        let h = g.spacing();
        for a in 0..3 {
            scratch[a].clear();
            let n = if a < g.dim() { dims[a] } else { 1 };
            for i in 0..n {
                let x = if a < g.dim() { o[a] + i as f64 * h } else { 0.0 };
                scratch[a].push(Complex64::from_polar(1.0, -2.0 * PI * nu[a] * x));
            }
        }
        let nf = self.fields.len();
        out[..nf].fill(ZERO);
        let nx = dims[0];
        for (z, ez) in scratch[2].iter().enumerate() {
            for (y, ey) in scratch[1].iter().enumerate() {
                let base = nx * (y + dims[1] * z);
                let eyz = ey * ez;
                for (f, acc) in self.fields.iter().zip(out.iter_mut()) {
                    let row = &f[base..base + nx];
                    let mut s = ZERO;
                    for (v, ex) in row.iter().zip(&scratch[0]) {
                        s += v * ex;
                    }
                    *acc += s * eyz;
                }
            }
        }
        let dv = g.cell_volume();
        for v in &mut out[..nf] {
            *v *= dv;
        }
    }
}

/// Truncated spectra of a part pair, ready for per-configuration sums.
#[derive(Debug, Clone)]
pub struct PairEvaluator {
    dim: usize,
    fixed_grid: SampleGrid,
    moving_grid: SampleGrid,
    fixed_bounds: Aabb,
    moving_bbox: Aabb,
    modes: Vec<Mode>,
    window: [usize; 3],
    moving: TruncatedSpectrum,
    moving_vector: Option<Vec<TruncatedSpectrum>>,
    sampler: Sampler,
    retained: usize,
    direct: Option<DirectFields>,
}

fn check_pair(fixed: &PartAsset, moving: &PartAsset) -> Result<(), EnergyError> {
    let (g1, g2) = (fixed.grid(), moving.grid());
    if !g1.compatible_with(g2) {
        return Err(EnergyError::GridMismatch(format!(
            "{} has {:?} nodes at spacing {}, {} has {:?} at {}",
            fixed.id,
            g1.dims(),
            g1.spacing(),
            moving.id,
            g2.dims(),
            g2.spacing()
        )));
    }
    Ok(())
}

fn select(s: &Spectrum, modes: Option<usize>, selection: ModeSelection) -> Result<TruncatedSpectrum, SpectralError> {
    match (modes, selection) {
        (None, _) => Ok(s.full_window()),
        (Some(m), _) if m == s.amplitudes.len() => Ok(s.full_window()),
        (Some(m), ModeSelection::Window) => spectral::truncate(s, m),
        (Some(m), ModeSelection::Ranked) => spectral::truncate_ranked(s, m),
    }
}

impl PairEvaluator {
    /// `modes = None` keeps every mode.
    pub fn new(fixed: &PartAsset, moving: &PartAsset, modes: Option<usize>, selection: ModeSelection) -> Result<Self, EnergyError> {
        check_pair(fixed, moving)?;
        let grid = *fixed.grid();
        let t1 = select(&fixed.spectrum, modes, selection)?;
        let t2 = select(&moving.spectrum, modes, selection)?;
        let moving_vector = match &moving.vector {
            Some(v) => Some(
                v.components
                    .iter()
                    .map(|c| select(c, modes, selection))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let dims = grid.dims();
        let h = grid.spacing();
        let mut list = Vec::with_capacity(t1.amplitudes.len());
        let mut i = 0;
        for c in 0..t1.window[2] {
            for b in 0..t1.window[1] {
                for a in 0..t1.window[0] {
                    let amp = t1.amplitudes[i];
                    i += 1;
                    if amp == ZERO {
                        continue;
                    }
                    let wpos = [a, b, c];
                    let k = [0, 1, 2].map(|x| if x < grid.dim() { t1.frequency(x, wpos[x]) as f64 } else { 0.0 });
                    let omega = Vector3::from_fn(|x, _| if x < grid.dim() { k[x] / (dims[x] as f64 * h) } else { 0.0 });
                    list.push(Mode { k, omega, amp, wpos });
                }
            }
        }
        let retained = match (modes, selection) {
            (Some(m), ModeSelection::Ranked) => m,
            _ => t1.amplitudes.len(),
        };
        Ok(Self {
            dim: grid.dim(),
            fixed_grid: grid,
            moving_grid: *moving.grid(),
            fixed_bounds: grid.bounds(),
            moving_bbox: moving.bbox,
            modes: list,
            window: t1.window,
            sampler: t2.sampler(),
            moving: t2,
            moving_vector,
            retained,
            direct: None,
        })
    }

    /// Switches how the moving spectrum is read at rotated frequencies.
    pub fn with_sampling(mut self, sampling: SpectralSampling, moving: &PartAsset) -> Result<Self, EnergyError> {
        self.direct = match sampling {
            SpectralSampling::Multilinear => None,
            SpectralSampling::Direct => {
                let mut fields = vec![inverse_dft(&moving.spectrum)?.values];
                if let Some(v) = &moving.vector {
                    for c in &v.components {
                        fields.push(inverse_dft(c)?.values);
                    }
                }
                Some(DirectFields {
                    grid: *moving.grid(),
                    fields,
                })
            }
        };
        Ok(self)
    }

    pub fn sampling(&self) -> SpectralSampling {
        if self.direct.is_some() {
            SpectralSampling::Direct
        } else {
            SpectralSampling::Multilinear
        }
    }

    pub fn modes_used(&self) -> usize {
        self.retained
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_vector_spectrum(&self) -> bool {
        self.moving_vector.is_some()
    }

    /// Whether the moved part's box leaves the fixed grid's node box.
    pub fn is_wrapped(&self, config: &Configuration) -> bool {
        let b = &self.fixed_bounds;
        self.moving_bbox.corners().iter().any(|c| {
            let p = config.rotation * c.coords + config.translation;
            (0..self.dim).any(|a| p[a] < b.min[a] || p[a] > b.max[a])
        })
    }

    /// Integer frequency of the moving grid to physical frequency.
    fn index_scale(&self) -> Vector3<f64> {
        let d = self.moving_grid.dims();
        let h = self.moving_grid.spacing();
        Vector3::from_fn(|a, _| if a < self.dim { 1.0 / (d[a] as f64 * h) } else { 0.0 })
    }

    fn twiddles(&self, t: &Vector3<f64>) -> [Vec<Complex64>; 3] {
        let dims = self.fixed_grid.dims();
        let h = self.fixed_grid.spacing();
        [0, 1, 2].map(|a| {
            if a >= self.dim {
                return vec![Complex64::new(1.0, 0.0)];
            }
            let n = self.window[a];
            let scale = 2.0 * PI * t[a] / (dims[a] as f64 * h);
            (0..n)
                .map(|w| Complex64::from_polar(1.0, scale * (w as i64 - (n / 2) as i64) as f64))
                .collect()
        })
    }

    fn accumulate(&self, config: &Configuration, with_gradient: bool, with_rotation: bool) -> ScoreGradient {
        let map = FrequencyMap::new(&self.fixed_grid, &self.moving_grid, &config.rotation);
        let tw = self.twiddles(&config.translation);
        let rt = config.rotation.transpose();
        // R^T [e]x for each world axis e (only z in the plane).
        let axes: &[usize] = if self.dim == 3 { &[0, 1, 2] } else { &[2] };
        let cross = [0, 1, 2].map(|e| rt * Vector3::ith(e, 1.0).cross_matrix());
        let mut score = ZERO;
        let mut gt = [ZERO; 3];
        let mut gr = [ZERO; 3];
        let want_rotation = with_rotation && self.moving_vector.is_some();
        let mut scratch: [Vec<Complex64>; 3] = Default::default();
        let mut direct_out = [ZERO; 4];
        let index_scale = self.index_scale();
        for m in &self.modes {
            let kk = map.apply(m.k);
            let mut v = [ZERO; 3];
            let b = match &self.direct {
                None => {
                    let st = self.sampler.stencil(kk);
                    if st.len == 0 {
                        continue;
                    }
                    if want_rotation {
                        if let Some(vec) = &self.moving_vector {
                            for (c, comp) in vec.iter().enumerate() {
                                v[c] = st.apply(&comp.amplitudes);
                            }
                        }
                    }
                    st.apply(&self.moving.amplitudes)
                }
                Some(direct) => {
                    let nu = Vector3::new(kk[0], kk[1], kk[2]).component_mul(&index_scale);
                    direct.sample(&nu, &mut scratch, &mut direct_out);
                    v[..self.dim].copy_from_slice(&direct_out[1..=self.dim]);
                    direct_out[0]
                }
            };
            let term = m.amp * tw[0][m.wpos[0]] * tw[1][m.wpos[1]] * tw[2][m.wpos[2]];
            let s = term * b;
            score += s;
            if !with_gradient {
                continue;
            }
            for a in 0..self.dim {
                gt[a] += s * m.omega[a];
            }
            if want_rotation {
                for &e in axes {
                    let u = cross[e] * m.omega;
                    let dot = v[0] * u.x + v[1] * u.y + v[2] * u.z;
                    gr[e] += term * dot;
                }
            }
        }
        let d_omega = frequency_cell(&self.fixed_grid);
        let two_pi_i = Complex64::new(0.0, 2.0 * PI * d_omega);
        ScoreGradient {
            score: score * d_omega,
            translation: gt.map(|g| g * two_pi_i),
            rotation: gr.map(|g| -g * two_pi_i),
        }
    }

    /// Direct sum over retained modes at one configuration.
    pub fn score_at(&self, config: &Configuration) -> Complex64 {
        self.accumulate(config, false, false).score
    }

    pub fn translational_gradient(&self, config: &Configuration) -> [Complex64; 3] {
        self.accumulate(config, true, false).translation
    }

    pub fn rotational_gradient(&self, config: &Configuration) -> Result<[Complex64; 3], EnergyError> {
        if self.moving_vector.is_none() {
            return Err(EnergyError::MissingVectorSpectrum);
        }
        Ok(self.accumulate(config, true, true).rotation)
    }

    /// Score and both gradients from one pass over the modes.
    pub fn gradient(&self, config: &Configuration) -> ScoreGradient {
        self.accumulate(config, true, true)
    }

    pub fn evaluate(&self, config: &Configuration) -> EnergyEval {
        let start = Instant::now();
        let g = self.accumulate(config, true, true);
        let eval_time_us = start.elapsed().as_secs_f64() * 1e6;
        EnergyEval {
            score: g.score,
            energy: -g.score.re,
            force: g.translation.map(|c| c.re),
            torque: g.rotation.map(|c| c.re),
            eval_time_us,
            modes_used: self.retained,
            wrapped: self.is_wrapped(config),
        }
    }

    /// Translation grid for [`PairEvaluator::score_field`]: fixed-grid
    /// dims and spacing with node `n/2` at zero translation.
    pub fn translation_grid(&self) -> SampleGrid {
        let g = &self.fixed_grid;
        let dims = g.dims();
        let mut origin = [0.0; 3];
        for a in 0..self.dim {
            origin[a] = -((dims[a] / 2) as f64) * g.spacing();
        }
        SampleGrid::new(self.dim, dims, origin, g.spacing()).expect("fixed grid is valid")
    }

    /// Score over every grid translation at rotation `r`.
    pub fn score_field(&self, r: &Matrix3<f64>) -> Result<ScoreField, EnergyError> {
        check_rotation(r, self.dim)?;
        let map = FrequencyMap::new(&self.fixed_grid, &self.moving_grid, r);
        let tgrid = self.translation_grid();
        let dims = tgrid.dims();
        let mut product = Spectrum::zeros(tgrid);
        let mut scratch: [Vec<Complex64>; 3] = Default::default();
        let mut direct_out = [ZERO; 4];
        let index_scale = self.index_scale();
        for m in &self.modes {
            let kk = map.apply(m.k);
            let b = match &self.direct {
                None => {
                    let st = self.sampler.stencil(kk);
                    if st.len == 0 {
                        continue;
                    }
                    st.apply(&self.moving.amplitudes)
                }
                Some(direct) => {
                    let nu = Vector3::new(kk[0], kk[1], kk[2]).component_mul(&index_scale);
                    direct.sample(&nu, &mut scratch, &mut direct_out);
                    direct_out[0]
                }
            };
            let mut s = [0usize; 3];
            for a in 0..3 {
                s[a] = (m.k[a] as i64 + (dims[a] / 2) as i64) as usize;
            }
            product.amplitudes[tgrid.index(s)] = m.amp * b;
        }
        let field = inverse_dft(&product)?;
        let wrapped = (0..tgrid.node_count())
            .map(|i| {
                let t = tgrid.node_position(i).coords;
                self.is_wrapped(&Configuration { rotation: *r, translation: t })
            })
            .collect();
        Ok(ScoreField {
            rotation: *r,
            field,
            wrapped,
            modes_used: self.retained,
        })
    }
}

/// Score over the translation grid for one rotation.
#[derive(Debug, Clone)]
pub struct ScoreField {
    pub rotation: Matrix3<f64>,
    /// Values at translations `t` = node positions of the field's grid.
    pub field: ComplexField,
    /// Translations where circular correlation may differ from the linear one.
    pub wrapped: Vec<bool>,
    pub modes_used: usize,
}

impl ScoreField {
    /// Node of largest `Re score` among unwrapped translations.
    pub fn argmax(&self) -> Option<usize> {
        self.field
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.wrapped[*i])
            .max_by(|a, b| a.1.re.total_cmp(&b.1.re).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }

    pub fn translation(&self, index: usize) -> Point3<f64> {
        self.field.grid.node_position(index)
    }

    pub fn all_wrapped(&self) -> bool {
        self.wrapped.iter().all(|&w| w)
    }
}

/// Full-spectrum score at one configuration.
pub fn score_at(fixed: &PartAsset, moving: &PartAsset, config: &Configuration) -> Result<Complex64, EnergyError> {
    Ok(PairEvaluator::new(fixed, moving, None, ModeSelection::Window)?.score_at(config))
}

pub fn score_field(fixed: &PartAsset, moving: &PartAsset, r: &Matrix3<f64>, modes: Option<usize>) -> Result<ScoreField, EnergyError> {
    PairEvaluator::new(fixed, moving, modes, ModeSelection::Window)?.score_field(r)
}

pub fn evaluate(fixed: &PartAsset, moving: &PartAsset, config: &Configuration, modes: Option<usize>) -> Result<EnergyEval, EnergyError> {
    Ok(PairEvaluator::new(fixed, moving, modes, ModeSelection::Window)?.evaluate(config))
}
