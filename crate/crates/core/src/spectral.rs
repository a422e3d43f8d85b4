//! Fourier transforms of grid fields, low-pass truncation and spectral
//! rotation by multilinear interpolation.
//!
//! Spectra are stored DC-centered: along an axis with `n` nodes, storage
//! position `s` holds integer frequency `k = s - n/2`, physical frequency
//! `k / (n h)`. The forward transform carries `dV = h^d`, the inverse
//! `dOmega = 1 / (m dV)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::SpectralError;
use crate::grid::{ComplexField, SampleGrid, VectorField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Full spectrum of a field over the dual grid of `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Physical grid the spectrum was taken from.
    pub grid: SampleGrid,
    pub amplitudes: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelection {
    /// Centered low-frequency window.
    #[default]
    Window,
    /// Largest-magnitude modes; stored in the smallest centered window holding them.
    Ranked,
}

/// Retained modes of a spectrum inside a centered index window.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSpectrum {
    pub grid: SampleGrid,
    /// Window side per axis (1 on the unused planar axis).
    pub window: [usize; 3],
    /// Window amplitudes, x-fastest; discarded modes are exact zeros.
    pub amplitudes: Vec<Complex64>,
    /// Number of retained modes `m'`.
    pub modes: usize,
    pub selection: ModeSelection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSpectrum {
    pub components: Vec<Spectrum>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedVectorSpectrum {
    pub components: Vec<TruncatedSpectrum>,
}

/// Frequency cell volume `1 / (m h^d)`.
pub fn frequency_cell(grid: &SampleGrid) -> f64 {
    1.0 / (grid.node_count() as f64 * grid.cell_volume())
}

/// Integer frequency of storage position `s` on an axis with `n` nodes.
#[inline]
pub fn frequency_index(s: usize, n: usize) -> i64 {
    s as i64 - (n / 2) as i64
}

fn check_power_of_two(grid: &SampleGrid) -> Result<(), SpectralError> {
    for (axis, &count) in grid.dims().iter().enumerate().take(grid.dim()) {
        if !count.is_power_of_two() {
            return Err(SpectralError::NotPowerOfTwo { axis, count });
        }
    }
    Ok(())
}

/// Applies `line_op` to every line of `data` along `axis`.
fn for_each_line(data: &mut [Complex64], dims: [usize; 3], axis: usize, line_op: impl Fn(&mut [Complex64]) + Sync) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let stride: usize = dims[..axis].iter().product();
    let lines = data.len() / n;
    let mut buf = vec![ZERO; data.len()];
    // Gather into contiguous lines; line l covers (outer, inner) = (l / stride, l % stride).
    for l in 0..lines {
        let (outer, inner) = (l / stride, l % stride);
        let base = outer * stride * n + inner;
        for j in 0..n {
            buf[l * n + j] = data[base + j * stride];
        }
    }
    buf.par_chunks_mut(n).for_each(|line| line_op(line));
    for l in 0..lines {
        let (outer, inner) = (l / stride, l % stride);
        let base = outer * stride * n + inner;
        for j in 0..n {
            data[base + j * stride] = buf[l * n + j];
        }
    }
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    }
}

/// `dV * sum_i f_i exp(-2 pi i w_k . p_i)` for every DC-centered `k`.
pub fn forward_dft(field: &ComplexField) -> Result<Spectrum, SpectralError> {
    let grid = field.grid;
    check_power_of_two(&grid)?;
    let dims = grid.dims();
    let h = grid.spacing();
    let mut data = field.values.clone();
    for axis in 0..grid.dim() {
        let n = dims[axis];
        let fft = plan(n, true);
        let o = grid.origin()[axis];
        let phase: Vec<Complex64> = (0..n)
            .map(|s| Complex64::from_polar(1.0, -2.0 * PI * frequency_index(s, n) as f64 * o / (n as f64 * h)))
            .collect();
        for_each_line(&mut data, dims, axis, |line| {
            fft.process(line);
            // fftshift: storage s holds FFT bin (s - n/2) mod n.
            line.rotate_left(n / 2);
            for (v, p) in line.iter_mut().zip(&phase) {
                *v *= p;
            }
        });
    }
    let dv = grid.cell_volume();
    data.par_iter_mut().for_each(|v| *v *= dv);
    Ok(Spectrum { grid, amplitudes: data })
}

/// `dOmega * sum_k F_k exp(2 pi i w_k . p_i)`; inverse of [`forward_dft`].
pub fn inverse_dft(spectrum: &Spectrum) -> Result<ComplexField, SpectralError> {
    let grid = spectrum.grid;
    check_power_of_two(&grid)?;
    let dims = grid.dims();
    let h = grid.spacing();
    let mut data = spectrum.amplitudes.clone();
    for axis in 0..grid.dim() {
        let n = dims[axis];
        let fft = plan(n, false);
        let o = grid.origin()[axis];
        let phase: Vec<Complex64> = (0..n)
            .map(|s| Complex64::from_polar(1.0, 2.0 * PI * frequency_index(s, n) as f64 * o / (n as f64 * h)))
            .collect();
        for_each_line(&mut data, dims, axis, |line| {
            for (v, p) in line.iter_mut().zip(&phase) {
                *v *= p;
            }
            line.rotate_right(n / 2);
            fft.process(line);
        });
    }
    let d_omega = frequency_cell(&grid);
    data.par_iter_mut().for_each(|v| *v *= d_omega);
    Ok(ComplexField::new(grid, data))
}

pub fn forward_vector(field: &VectorField) -> Result<VectorSpectrum, SpectralError> {
    Ok(VectorSpectrum {
        components: field.components.iter().map(forward_dft).collect::<Result<_, _>>()?,
    })
}

/// Window side for `m'` modes in `dim` dimensions: `m'^(1/d)`, even or 1.
pub fn window_side(modes: usize, dim: usize) -> Result<usize, SpectralError> {
    let bad = SpectralError::InvalidModeCount { modes, dim };
    if modes == 0 {
        return Err(bad);
    }
    let side = (modes as f64).powf(1.0 / dim as f64).round() as usize;
    if side.pow(dim as u32) != modes || (side != 1 && side % 2 != 0) {
        return Err(bad);
    }
    Ok(side)
}

fn window_dims(grid: &SampleGrid, side: usize) -> Result<[usize; 3], SpectralError> {
    let dims = grid.dims();
    let mut w = [1; 3];
    for axis in 0..grid.dim() {
        if side > dims[axis] {
            return Err(SpectralError::WindowTooLarge {
                side,
                axis,
                count: dims[axis],
            });
        }
        w[axis] = side;
    }
    Ok(w)
}

/// Full-grid storage index of window position `(a, b, c)`.
#[inline]
fn window_to_full(dims: [usize; 3], window: [usize; 3], wpos: [usize; 3]) -> usize {
    let mut s = [0; 3];
    for a in 0..3 {
        s[a] = wpos[a] + dims[a] / 2 - window[a] / 2;
    }
    s[0] + dims[0] * (s[1] + dims[1] * s[2])
}

fn window_positions(window: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    (0..window[2]).flat_map(move |c| (0..window[1]).flat_map(move |b| (0..window[0]).map(move |a| [a, b, c])))
}

impl Spectrum {
    pub fn zeros(grid: SampleGrid) -> Self {
        Self {
            grid,
            amplitudes: vec![ZERO; grid.node_count()],
        }
    }

    /// The whole spectrum viewed as a window covering every mode.
    pub fn full_window(&self) -> TruncatedSpectrum {
        let mut window = [1; 3];
        window[..self.grid.dim()].copy_from_slice(&self.grid.dims()[..self.grid.dim()]);
        TruncatedSpectrum {
            grid: self.grid,
            window,
            amplitudes: self.amplitudes.clone(),
            modes: self.amplitudes.len(),
            selection: ModeSelection::Window,
        }
    }

    /// `sum |F_k|^2 dOmega`.
    pub fn energy(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * frequency_cell(&self.grid)
    }
}

/// Keeps the centered window of `m'` modes.
pub fn truncate(spectrum: &Spectrum, modes: usize) -> Result<TruncatedSpectrum, SpectralError> {
    let grid = spectrum.grid;
    let window = window_dims(&grid, window_side(modes, grid.dim())?)?;
    let dims = grid.dims();
    let amplitudes = window_positions(window)
        .map(|w| spectrum.amplitudes[window_to_full(dims, window, w)])
        .collect();
    Ok(TruncatedSpectrum {
        grid,
        window,
        amplitudes,
        modes,
        selection: ModeSelection::Window,
    })
}

/// Keeps the `m'` largest-magnitude modes (ties broken by storage index).
pub fn truncate_ranked(spectrum: &Spectrum, modes: usize) -> Result<TruncatedSpectrum, SpectralError> {
    let grid = spectrum.grid;
    let m = spectrum.amplitudes.len();
    if modes == 0 || modes > m {
        return Err(SpectralError::InvalidModeCount { modes, dim: grid.dim() });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        spectrum.amplitudes[b]
            .norm_sqr()
            .total_cmp(&spectrum.amplitudes[a].norm_sqr())
            .then(a.cmp(&b))
    });
    let kept = &order[..modes];
    let dims = grid.dims();
    // Smallest centered even window holding every kept mode.
    let mut side = 0usize;
    for &i in kept {
        let ijk = grid.unflatten(i);
        for a in 0..grid.dim() {
            let k = frequency_index(ijk[a], dims[a]);
            let need = if k < 0 { (-2 * k) as usize } else { (2 * k + 2) as usize };
            side = side.max(need);
        }
    }
    let window = window_dims(&grid, side.max(2))?;
    let mut keep = vec![false; m];
    for &i in kept {
        keep[i] = true;
    }
    let amplitudes = window_positions(window)
        .map(|w| {
            let i = window_to_full(dims, window, w);
            if keep[i] {
                spectrum.amplitudes[i]
            } else {
                ZERO
            }
        })
        .collect();
    Ok(TruncatedSpectrum {
        grid,
        window,
        amplitudes,
        modes,
        selection: ModeSelection::Ranked,
    })
}

pub fn truncate_vector(spectrum: &VectorSpectrum, modes: usize, selection: ModeSelection) -> Result<TruncatedVectorSpectrum, SpectralError> {
    let components = spectrum
        .components
        .iter()
        .map(|s| match selection {
            ModeSelection::Window => truncate(s, modes),
            ModeSelection::Ranked => truncate_ranked(s, modes),
        })
        .collect::<Result<_, _>>()?;
    Ok(TruncatedVectorSpectrum { components })
}

impl TruncatedSpectrum {
    pub fn is_full(&self) -> bool {
        (0..self.grid.dim()).all(|a| self.window[a] == self.grid.dims()[a])
    }

    /// Integer frequency of a window position on `axis`.
    #[inline]
    pub fn frequency(&self, axis: usize, wpos: usize) -> i64 {
        wpos as i64 - (self.window[axis] / 2) as i64
    }

    /// Zero-padded full spectrum.
    pub fn to_full(&self) -> Spectrum {
        let dims = self.grid.dims();
        let mut out = Spectrum::zeros(self.grid);
        for (w, a) in window_positions(self.window).zip(&self.amplitudes) {
            out.amplitudes[window_to_full(dims, self.window, w)] = *a;
        }
        out
    }

    pub fn energy(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * frequency_cell(&self.grid)
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(&self.grid, self.window)
    }
}

/// Retained share of spectral energy.
pub fn energy_fraction(full: &Spectrum, truncated: &TruncatedSpectrum) -> f64 {
    let total = full.energy();
    if total == 0.0 {
        1.0
    } else {
        truncated.energy() / total
    }
}

/// Multilinear interpolation weights for one fractional frequency index.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub len: usize,
    pub index: [usize; 8],
    pub weight: [Complex64; 8],
}

impl Stencil {
    #[inline]
    pub fn apply(&self, amplitudes: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for j in 0..self.len {
            acc += self.weight[j] * amplitudes[self.index[j]];
        }
        acc
    }
}

/// Interpolates window amplitudes at fractional integer-frequency
/// coordinates. Axes whose window spans the whole grid wrap periodically
/// (with the origin phase picked up per period); other axes read zero
/// outside the window.
#[derive(Debug, Clone)]
pub struct Sampler {
    dim: usize,
    window: [usize; 3],
    periodic: [bool; 3],
    /// `exp(-2 pi i o / h)`: factor gained by one period shift of `+n`.
    wrap_phase: [Complex64; 3],
}

impl Sampler {
    pub fn new(grid: &SampleGrid, window: [usize; 3]) -> Self {
        let dims = grid.dims();
        let mut periodic = [false; 3];
        let mut wrap_phase = [Complex64::new(1.0, 0.0); 3];
        for a in 0..grid.dim() {
            periodic[a] = window[a] == dims[a];
            let turns = grid.origin()[a] / grid.spacing();
            let frac = turns - turns.round();
            wrap_phase[a] = Complex64::from_polar(1.0, -2.0 * PI * frac);
        }
        Self {
            dim: grid.dim(),
            window,
            periodic,
            wrap_phase,
        }
    }

    /// Stencil at integer-frequency coordinates `k` (third entry ignored in 2D).
    #[inline]
    pub fn stencil(&self, k: [f64; 3]) -> Stencil {
        let mut st = Stencil {
            len: 0,
            index: [0; 8],
            weight: [ZERO; 8],
        };
        // Per axis: up to two (storage position, weight) pairs.
        let mut axis_terms = [[(0usize, ZERO); 2]; 3];
        let mut axis_len = [1usize; 3];
        for a in 0..self.dim {
            let n = self.window[a] as i64;
            let half = n / 2;
            let x = k[a];
            let lo = x.floor();
            let frac = x - lo;
            let lo = lo as i64;
            let mut len = 0;
            for (kk, w) in [(lo, 1.0 - frac), (lo + 1, frac)] {
                if w == 0.0 {
                    continue;
                }
                let mut pos = kk + half;
                let mut weight = Complex64::new(w, 0.0);
                if self.periodic[a] {
                    let shifts = pos.div_euclid(n);
                    pos = pos.rem_euclid(n);
                    if shifts != 0 {
                        weight *= self.wrap_phase[a].powi(shifts as i32);
                    }
                } else if pos < 0 || pos >= n {
                    continue;
                }
                axis_terms[a][len] = (pos as usize, weight);
                len += 1;
            }
            if len == 0 {
                return st;
            }
            axis_len[a] = len;
        }
        let (w0, w1) = (self.window[0], self.window[1]);
        for c in 0..axis_len[2] {
            let (pz, wz) = if self.dim == 3 { axis_terms[2][c] } else { (0, Complex64::new(1.0, 0.0)) };
            for b in 0..axis_len[1] {
                let (py, wy) = axis_terms[1][b];
                let wyz = wy * wz;
                for a in 0..axis_len[0] {
                    let (px, wx) = axis_terms[0][a];
                    st.index[st.len] = px + w0 * (py + w1 * pz);
                    st.weight[st.len] = wx * wyz;
                    st.len += 1;
                }
            }
        }
        st
    }
}

/// Checks `R^T R = I` and `det R = 1` within 1e-9; planar rotations must fix z.
pub fn check_rotation(r: &Matrix3<f64>, dim: usize) -> Result<(), SpectralError> {
    let residual = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if residual > 1e-9 || (det - 1.0).abs() > 1e-9 {
        return Err(SpectralError::NotARotation { residual, det });
    }
    if dim == 2 {
        let off = r[(0, 2)].abs() + r[(1, 2)].abs() + r[(2, 0)].abs() + r[(2, 1)].abs();
        if off > 1e-9 || (r[(2, 2)] - 1.0).abs() > 1e-9 {
            return Err(SpectralError::OutOfPlaneRotation);
        }
    }
    Ok(())
}

/// Maps integer frequencies of `from` to fractional integer frequencies of
/// `to` at `-R^T w`.
#[derive(Debug, Clone, Copy)]
pub struct FrequencyMap {
    matrix: Matrix3<f64>,
}

impl FrequencyMap {
    pub fn new(from: &SampleGrid, to: &SampleGrid, r: &Matrix3<f64>) -> Self {
        let scale = |g: &SampleGrid| {
            let d = g.dims();
            let s = |a: usize| if a < g.dim() { d[a] as f64 * g.spacing() } else { 1.0 };
            Vector3::new(s(0), s(1), s(2))
        };
        let to_freq = Matrix3::from_diagonal(&scale(from).map(|x| 1.0 / x));
        let to_index = Matrix3::from_diagonal(&scale(to));
        let mut matrix = -(to_index * r.transpose() * to_freq);
        if from.dim() == 2 {
            matrix[(2, 2)] = 0.0;
        }
        Self { matrix }
    }

    #[inline]
    pub fn apply(&self, k: [f64; 3]) -> [f64; 3] {
        let v = self.matrix * Vector3::new(k[0], k[1], k[2]);
        [v.x, v.y, v.z]
    }
}

/// Output amplitude at `w` is the input interpolated at `R^T(-w)`.
pub fn rotate_reflect_truncated(spectrum: &TruncatedSpectrum, r: &Matrix3<f64>) -> Result<TruncatedSpectrum, SpectralError> {
    check_rotation(r, spectrum.grid.dim())?;
    let map = FrequencyMap::new(&spectrum.grid, &spectrum.grid, r);
    let sampler = spectrum.sampler();
    let positions: Vec<[usize; 3]> = window_positions(spectrum.window).collect();
    let amplitudes = positions
        .par_iter()
        .map(|w| {
            let k = [0, 1, 2].map(|a| spectrum.frequency(a, w[a]) as f64);
            sampler.stencil(map.apply(k)).apply(&spectrum.amplitudes)
        })
        .collect();
    Ok(TruncatedSpectrum {
        amplitudes,
        ..spectrum.clone()
    })
}

pub fn rotate_reflect_spectrum(spectrum: &Spectrum, r: &Matrix3<f64>) -> Result<Spectrum, SpectralError> {
    let rotated = rotate_reflect_truncated(&spectrum.full_window(), r)?;
    Ok(Spectrum {
        grid: spectrum.grid,
        amplitudes: rotated.amplitudes,
    })
}

/// Rotation about z by `theta`.
pub fn planar_rotation(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: SampleGrid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.node_count())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(grid, values)
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn delta_transforms_to_flat() {
        let grid = SampleGrid::centered(2, 8, 0.25).unwrap();
        let mut f = ComplexField::zeros(grid);
        f.values[grid.index([4, 4, 0])] = Complex64::new(1.0, 0.0);
        let s = forward_dft(&f).unwrap();
        for a in &s.amplitudes {
            assert!((a - grid.cell_volume()).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_transforms_to_dc() {
        let grid = SampleGrid::new(3, [8, 4, 16], [0.3, -1.0, 2.0], 0.5).unwrap();
        let c = Complex64::new(2.0, -0.5);
        let s = forward_dft(&ComplexField::from_fn(grid, |_| c)).unwrap();
        let dc = grid.index([4, 2, 8]);
        let m = grid.node_count() as f64;
        for (i, a) in s.amplitudes.iter().enumerate() {
            let expected = if i == dc { c * m * grid.cell_volume() } else { ZERO };
            assert!((a - expected).norm() < 1e-12 * m, "{i}: {a}");
        }
    }

    #[test]
    fn round_trip_3d() {
        let grid = SampleGrid::new(3, [32, 32, 32], [-1.0, 0.5, 0.25], 0.1).unwrap();
        let f = random_field(grid, 1);
        let back = inverse_dft(&forward_dft(&f).unwrap()).unwrap();
        assert!(max_abs_diff(&f.values, &back.values) < 1e-12);
    }

    #[test]
    fn dc_only_is_constant() {
        let grid = SampleGrid::centered(2, 16, 0.5).unwrap();
        let mut s = Spectrum::zeros(grid);
        s.amplitudes[grid.index([8, 8, 0])] = Complex64::new(3.0, 1.0);
        let f = inverse_dft(&s).unwrap();
        let expected = Complex64::new(3.0, 1.0) * frequency_cell(&grid);
        for v in &f.values {
            assert!((v - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn window_sides() {
        assert_eq!(window_side(256, 2).unwrap(), 16);
        assert_eq!(window_side(4096, 3).unwrap(), 16);
        assert_eq!(window_side(1, 3).unwrap(), 1);
        assert!(window_side(9, 2).is_err());
        assert!(window_side(200, 2).is_err());
        let grid = SampleGrid::centered(2, 8, 1.0).unwrap();
        assert!(matches!(
            truncate(&Spectrum::zeros(grid), 256),
            Err(SpectralError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn identity_truncation_is_exact() {
        let grid = SampleGrid::centered(2, 16, 0.5).unwrap();
        let s = forward_dft(&random_field(grid, 2)).unwrap();
        let t = truncate(&s, 256).unwrap();
        assert!(t.is_full());
        assert_eq!(t.to_full(), s);
    }

    #[test]
    fn truncated_inverse_is_low_pass() {
        let grid = SampleGrid::centered(2, 32, 0.25).unwrap();
        let f = random_field(grid, 3);
        let s = forward_dft(&f).unwrap();
        let t = truncate(&s, 64).unwrap();
        let low = inverse_dft(&t.to_full()).unwrap();
        // Filtering by hand: zero every mode outside the 8x8 window.
        let mut manual = s.clone();
        for (i, a) in manual.amplitudes.iter_mut().enumerate() {
            let [x, y, _] = grid.unflatten(i);
            if !(12..20).contains(&x) || !(12..20).contains(&y) {
                *a = ZERO;
            }
        }
        let manual = inverse_dft(&manual).unwrap();
        assert!(max_abs_diff(&low.values, &manual.values) < 1e-14);
        let e_low: f64 = low.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume();
        assert!((e_low - t.energy()).abs() < 1e-9 * e_low);
        assert!(e_low < s.energy());
    }

    #[test]
    fn energy_fraction_is_monotone() {
        let grid = SampleGrid::centered(2, 64, 0.1).unwrap();
        let s = forward_dft(&random_field(grid, 4)).unwrap();
        let mut last = 0.0;
        for side in [2, 4, 8, 16, 32, 64] {
            let e = energy_fraction(&s, &truncate(&s, side * side).unwrap());
            assert!(e >= last);
            last = e;
        }
        assert!((last - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranked_keeps_largest() {
        let grid = SampleGrid::centered(2, 16, 0.5).unwrap();
        let s = forward_dft(&random_field(grid, 5)).unwrap();
        let t = truncate_ranked(&s, 10).unwrap();
        assert_eq!(t.selection, ModeSelection::Ranked);
        let kept: Vec<f64> = t.amplitudes.iter().filter(|a| a.norm() > 0.0).map(|a| a.norm()).collect();
        assert_eq!(kept.len(), 10);
        let threshold = kept.iter().cloned().fold(f64::INFINITY, f64::min);
        let larger = s.amplitudes.iter().filter(|a| a.norm() >= threshold).count();
        assert_eq!(larger, 10);
        let full = t.to_full();
        for (a, b) in full.amplitudes.iter().zip(&s.amplitudes) {
            assert!(*a == ZERO || a == b);
        }
    }

    #[test]
    fn identity_rotation_reflects() {
        let grid = SampleGrid::centered(2, 16, 0.5).unwrap();
        let s = forward_dft(&random_field(grid, 6)).unwrap();
        let r = rotate_reflect_spectrum(&s, &Matrix3::identity()).unwrap();
        for i in 0..grid.node_count() {
            let [x, y, _] = grid.unflatten(i);
            // -k for storage s = k + 8 is storage 16 - s (mod 16).
            let j = grid.index([(16 - x) % 16, (16 - y) % 16, 0]);
            assert!((r.amplitudes[i] - s.amplitudes[j]).norm() < 1e-15);
        }
        let half_turn = rotate_reflect_spectrum(&s, &planar_rotation(PI)).unwrap();
        assert!(max_abs_diff(&half_turn.amplitudes, &s.amplitudes) < 1e-12);
    }

    #[test]
    fn off_grid_origin_wraps_with_phase() {
        // Full spectra of an arbitrary-origin grid are periodic up to a phase;
        // reflection through the sampler must match the direct transform of
        // the reflected field.
        let grid = SampleGrid::new(2, [8, 8, 1], [-0.37, -0.52, 0.0], 0.125).unwrap();
        let f = random_field(grid, 7);
        let s = forward_dft(&f).unwrap();
        let r = rotate_reflect_spectrum(&s, &Matrix3::identity()).unwrap();
        for i in 0..grid.node_count() {
            let [x, y, _] = grid.unflatten(i);
            let k = [frequency_index(x, 8) as f64, frequency_index(y, 8) as f64];
            let direct: Complex64 = f
                .values
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let p = grid.node_position(j);
                    v * Complex64::from_polar(1.0, 2.0 * PI * (k[0] * p.x + k[1] * p.y) / (8.0 * 0.125))
                })
                .sum::<Complex64>()
                * grid.cell_volume();
            assert!((r.amplitudes[i] - direct).norm() < 1e-12, "{i}");
        }
    }

    #[test]
    fn rejects_bad_rotations() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(matches!(check_rotation(&r, 3), Err(SpectralError::NotARotation { .. })));
        let tilt = nalgebra::Rotation3::from_euler_angles(0.3, 0.0, 0.0).into_inner();
        assert!(check_rotation(&tilt, 3).is_ok());
        assert!(matches!(check_rotation(&tilt, 2), Err(SpectralError::OutOfPlaneRotation)));
        assert!(check_rotation(&(Matrix3::identity() * 1.01), 3).is_err());
    }

    #[test]
    fn truncated_rotation_zero_outside_window() {
        let grid = SampleGrid::centered(2, 32, 0.25).unwrap();
        let s = forward_dft(&random_field(grid, 8)).unwrap();
        let t = truncate(&s, 64).unwrap();
        let r = planar_rotation(0.4);
        let rt = rotate_reflect_truncated(&t, &r).unwrap();
        // Same thing through the zero-padded full spectrum.
        let full = rotate_reflect_spectrum(&t.to_full(), &r).unwrap();
        let back = truncate(&full, 64).unwrap();
        assert!(max_abs_diff(&rt.amplitudes, &back.amplitudes) < 1e-14);
        // Corner mode (-4, -4) maps to (5.24, 2.13), outside the 8x8 window.
        assert_eq!(rt.amplitudes[0], ZERO);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn linearity(seed in 0u64..1000, a_re in -3.0f64..3.0, a_im in -3.0f64..3.0) {
                let grid = SampleGrid::new(2, [16, 8, 1], [0.1, -0.7, 0.0], 0.3).unwrap();
                let f = random_field(grid, seed);
                let g = random_field(grid, seed + 1);
                let a = Complex64::new(a_re, a_im);
                let combo = ComplexField::new(grid, f.values.iter().zip(&g.values).map(|(x, y)| a * x + y).collect());
                let lhs = forward_dft(&combo).unwrap();
                let (sf, sg) = (forward_dft(&f).unwrap(), forward_dft(&g).unwrap());
                for i in 0..grid.node_count() {
                    let rhs = a * sf.amplitudes[i] + sg.amplitudes[i];
                    prop_assert!((lhs.amplitudes[i] - rhs).norm() < 1e-12);
                }
            }

            #[test]
            fn parseval(seed in 0u64..1000) {
                let grid = SampleGrid::new(3, [8, 16, 4], [0.0, 1.0, -2.0], 0.7).unwrap();
                let f = random_field(grid, seed);
                let s = forward_dft(&f).unwrap();
                let e: f64 = f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume();
                prop_assert!((e - s.energy()).abs() <= 1e-9 * e);
            }

            #[test]
            fn conjugate_symmetry_for_real_input(seed in 0u64..1000) {
                let grid = SampleGrid::new(2, [16, 16, 1], [-0.3, 0.45, 0.0], 0.2).unwrap();
                let mut f = random_field(grid, seed);
                for v in &mut f.values { v.im = 0.0; }
                let s = forward_dft(&f).unwrap();
                let mirrored = rotate_reflect_spectrum(&s, &Matrix3::identity()).unwrap();
                for i in 0..grid.node_count() {
                    prop_assert!((mirrored.amplitudes[i] - s.amplitudes[i].conj()).norm() < 1e-12);
                }
            }
        }
    }
}
