//! End-to-end steps behind the command line: asset precomputation,
//! landscape export, single evaluations and latency benchmarks.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets::{self, AssetEntry, AssetManifest, BoxSpec, FileRef, StageTimings};
use crate::descriptor::{self, IntegrationPolicy, KernelSpec};
use crate::energy::{Configuration, EnergyEval, PairEvaluator, PartAsset, ScoreField};
use crate::error::{Error, Result};
use crate::grid::SampleGrid;
use crate::scenes::Scene;
use crate::solids::{self, Aabb, Boundary, Solid, SolidFormat};
use crate::spectral::{self, ModeSelection};

/// Centered grid with `n` nodes per axis holding every solid, padded by half
/// the largest bounding-box diagonal plus the quadrature margin.
pub fn shared_grid(solids: &[&Solid], n: usize) -> Result<SampleGrid> {
    let dim = solids.first().map(|s| s.dimension()).ok_or_else(|| Error::Manifest("no parts".into()))?;
    if solids.iter().any(|s| s.dimension() != dim) {
        return Err(Error::Manifest("parts mix 2D and 3D solids".into()));
    }
    let bbox = solids.iter().fold(Aabb::empty(), |b, s| b.union(&s.bounding_box()));
    let pad = solids.iter().map(|s| s.bounding_box().diagonal()).fold(0.0, f64::max) * 0.5;
    let reach = (0..dim).map(|k| bbox.min[k].abs().max(bbox.max[k].abs())).fold(0.0, f64::max);
    // The 2h quadrature margin depends on h itself; solve for it directly.
    let half = (n / 2) as f64;
    let h = (reach + pad) / (half - 3.0);
    Ok(SampleGrid::centered_enclosing(dim, n, &bbox, pad + 2.0 * h)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct PrecomputeReport {
    pub manifest: PathBuf,
    pub timings: Vec<(String, StageTimings)>,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Field, spectrum and vector spectra of one part, written next to its
/// solid file `solid_name` inside `dir`.
pub fn precompute_part(
    id: &str,
    solid_name: &str,
    grid: &SampleGrid,
    kernel: &KernelSpec,
    policy: &IntegrationPolicy,
    dir: &Path,
) -> Result<(AssetEntry, StageTimings)> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let path = dir.join(solid_name);
    let format = SolidFormat::from_path(&path).ok_or_else(|| Error::Manifest(format!("unknown solid format: {solid_name}")))?;
    let solid = solids::load_solid(&path, format)?;
    timings.load_ms = ms(t);

    let t = Instant::now();
    let field = descriptor::affinity_field(&solid, grid, kernel, policy)?;
    timings.field_ms = ms(t);

    let t = Instant::now();
    let spectrum = spectral::forward_dft(&field.field)?;
    let vector = spectral::forward_vector(&descriptor::vector_density(&field.field))?;
    timings.transform_ms = ms(t);

    let t = Instant::now();
    let field_name = format!("{id}.gfld");
    assets::write_field(&dir.join(&field_name), &field.field, &field.boundary_nodes)?;
    let spectrum_name = format!("{id}.gspc");
    assets::write_spectrum(&dir.join(&spectrum_name), &spectrum.full_window())?;
    let mut vector_refs = Vec::new();
    for (k, c) in vector.components.iter().enumerate() {
        let name = format!("{id}.p{k}.gspc");
        assets::write_spectrum(&dir.join(&name), &c.full_window())?;
        vector_refs.push(FileRef::new(dir, &name)?);
    }
    let entry = AssetEntry {
        id: id.to_string(),
        solid: FileRef::new(dir, solid_name)?,
        kernel: *kernel,
        policy: *policy,
        grid: *grid,
        bbox: BoxSpec::from(solid.bounding_box()),
        field: FileRef::new(dir, &field_name)?,
        spectrum: FileRef::new(dir, &spectrum_name)?,
        vector: vector_refs,
        boundary_nodes: field.boundary_nodes.len(),
    };
    timings.write_ms = ms(t);
    Ok((entry, timings))
}

fn extension(solid: &Solid) -> &'static str {
    match solid.boundary() {
        Boundary::Polygon(_) => "json",
        Boundary::Mesh(_) => "obj",
    }
}

fn save_solid(solid: &Solid, path: &Path) -> std::io::Result<()> {
    match solid.boundary() {
        Boundary::Polygon(p) => solids::save_poly_json(p, path),
        Boundary::Mesh(m) => solids::save_obj(m, path),
    }
}

/// Precomputes `(id, solid)` parts on a shared grid and writes the manifest.
pub fn precompute_solids(
    parts: &[(String, Solid)],
    grid: &SampleGrid,
    kernel: &KernelSpec,
    policy: &IntegrationPolicy,
    scene: Option<String>,
    dir: &Path,
) -> Result<PrecomputeReport> {
    fs::create_dir_all(dir)?;
    let mut manifest = AssetManifest::new(scene);
    let mut timings = Vec::new();
    for (id, solid) in parts {
        let name = format!("{id}.{}", extension(solid));
        save_solid(solid, &dir.join(&name))?;
        let (entry, t) = precompute_part(id, &name, grid, kernel, policy, dir)?;
        manifest.parts.push(entry);
        timings.push((id.clone(), t));
    }
    manifest.check_padding()?;
    Ok(PrecomputeReport {
        manifest: manifest.save(dir)?,
        timings,
    })
}

/// Loads solid files, ids taken from the file stems.
pub fn load_solids(paths: &[PathBuf]) -> Result<Vec<(String, Solid)>> {
    paths
        .iter()
        .map(|p| {
            let format = SolidFormat::from_path(p).ok_or_else(|| Error::Manifest(format!("unknown solid format: {}", p.display())))?;
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("part").to_string();
            Ok((id, solids::load_solid(p, format)?))
        })
        .collect()
}

pub fn precompute_scene(scene: &Scene, n: usize, kernel: &KernelSpec, policy: &IntegrationPolicy, dir: &Path) -> Result<PrecomputeReport> {
    let parts = vec![("fixed".to_string(), scene.fixed.clone()), ("moving".to_string(), scene.moving.clone())];
    precompute_solids(&parts, &scene.grid(n)?, kernel, policy, Some(scene.id.to_string()), dir)
}

/// A pose as accepted on the command line and over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PoseSpec {
    Planar {
        theta: f64,
        x: f64,
        y: f64,
    },
    Quaternion {
        /// `[w, x, y, z]`, normalized on use.
        quaternion: [f64; 4],
        translation: [f64; 3],
    },
    Matrix {
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    },
}

impl PoseSpec {
    pub fn to_configuration(&self, dim: usize) -> Result<Configuration> {
        let (r, t) = match *self {
            PoseSpec::Planar { theta, x, y } => (spectral::planar_rotation(theta), Vector3::new(x, y, 0.0)),
            PoseSpec::Quaternion { quaternion: [w, x, y, z], translation } => {
                let q = Quaternion::new(w, x, y, z);
                if !(q.norm() > 0.0) {
                    return Err(Error::Manifest("zero quaternion".into()));
                }
                (UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner(), Vector3::from(translation))
            }
            PoseSpec::Matrix { rotation, translation } => {
                (Matrix3::from_fn(|i, j| rotation[i][j]), Vector3::from(translation))
            }
        };
        Ok(Configuration::new(r, t, dim)?)
    }
}

/// JSON form of an [`EnergyEval`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub score_re: f64,
    pub score_im: f64,
    pub energy: f64,
    pub force: [f64; 3],
    pub torque: [f64; 3],
    pub eval_time_us: f64,
    pub modes: usize,
    pub wrapped: bool,
}

impl From<EnergyEval> for EvalRecord {
    fn from(e: EnergyEval) -> Self {
        Self {
            score_re: e.score.re,
            score_im: e.score.im,
            energy: e.energy,
            force: e.force,
            torque: e.torque,
            eval_time_us: e.eval_time_us,
            modes: e.modes_used,
            wrapped: e.wrapped,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Argmax {
    pub index: usize,
    pub cell: [usize; 3],
    pub translation: [f64; 3],
    pub score_re: f64,
}

/// Largest `Re score` over unmasked translations.
pub fn landscape_argmax(sf: &ScoreField) -> Option<Argmax> {
    let i = sf.argmax()?;
    Some(Argmax {
        index: i,
        cell: sf.field.grid.unflatten(i),
        translation: sf.translation(i).coords.into(),
        score_re: sf.field.values[i].re,
    })
}

/// JSON sidecar of an exported landscape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandscapeMeta {
    pub fixed: String,
    pub moving: String,
    pub rotation: [[f64; 3]; 3],
    pub modes: usize,
    pub sigma: f64,
    pub penalty: f64,
    pub translation_grid: SampleGrid,
    /// z index of the exported heatmap (0 for planar scenes).
    pub slice: usize,
    /// Masked translations are the flag section of this `GFLD` file.
    pub field_file: String,
    pub wrap_flags: String,
    pub csv_file: String,
    pub png_file: String,
    pub masked: usize,
    pub full_mask: bool,
    pub argmax: Option<Argmax>,
    pub min_energy: Option<f64>,
}

/// Writes `<stem>.gfld`, `<stem>.csv`, `<stem>.png` and `<stem>.json`.
pub fn export_landscape(
    sf: &ScoreField,
    kernel: &KernelSpec,
    ids: (&str, &str),
    slice: Option<usize>,
    dir: &Path,
    stem: &str,
) -> Result<LandscapeMeta> {
    fs::create_dir_all(dir)?;
    let grid = sf.field.grid;
    let dims = grid.dims();
    let slice = slice.unwrap_or(if grid.dim() == 3 { dims[2] / 2 } else { 0 });
    if slice >= dims[2] {
        return Err(Error::Manifest(format!("slice {slice} outside {} planes", dims[2])));
    }
    let flags: Vec<usize> = (0..grid.node_count()).filter(|&i| sf.wrapped[i]).collect();
    let field_file = format!("{stem}.gfld");
    assets::write_field(&dir.join(&field_file), &sf.field, &flags)?;

    let plane: Vec<Option<f64>> = (0..dims[0] * dims[1])
        .map(|i| {
            let j = i + slice * dims[0] * dims[1];
            (!sf.wrapped[j]).then(|| sf.field.values[j].re)
        })
        .collect();

    let csv_file = format!("{stem}.csv");
    let mut csv = String::from("y\\x");
    for ix in 0..dims[0] {
        csv += &format!(",{}", grid.position_of([ix, 0, 0]).x);
    }
    csv.push('\n');
    for iy in 0..dims[1] {
        csv += &format!("{}", grid.position_of([0, iy, 0]).y);
        for ix in 0..dims[0] {
            match plane[ix + dims[0] * iy] {
                Some(v) => csv += &format!(",{v:e}"),
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    fs::write(dir.join(&csv_file), csv)?;

    let png_file = format!("{stem}.png");
    heatmap(&plane, dims[0], dims[1]).save(dir.join(&png_file))?;

    let argmax = landscape_argmax(sf);
    let meta = LandscapeMeta {
        fixed: ids.0.to_string(),
        moving: ids.1.to_string(),
        rotation: sf.rotation.transpose().into(),
        modes: sf.modes_used,
        sigma: kernel.sigma,
        penalty: kernel.penalty(),
        translation_grid: grid,
        slice,
        wrap_flags: format!("{field_file}#flags"),
        field_file,
        csv_file,
        png_file,
        masked: flags.len(),
        full_mask: sf.all_wrapped(),
        min_energy: argmax.as_ref().map(|a| -a.score_re),
        argmax,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(meta)
}

const MASK_COLOR: Rgb<u8> = Rgb([64, 64, 64]);

/// Blue (low score) to yellow (high score); row 0 of the image is the top
/// (largest y). Masked cells are dark gray.
pub fn heatmap(plane: &[Option<f64>], w: usize, h: usize) -> RgbImage {
    let (lo, hi) = plane.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let stops = [[48.0, 18.0, 59.0], [33.0, 145.0, 140.0], [253.0, 231.0, 37.0]];
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let iy = h - 1 - y as usize;
        match plane[x as usize + w * iy] {
            None => MASK_COLOR,
            Some(v) => {
                let s = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                let f = s * 2.0;
                let (a, b, t) = if f < 1.0 { (stops[0], stops[1], f) } else { (stops[1], stops[2], f - 1.0) };
                Rgb([0, 1, 2].map(|c| (a[c] + (b[c] - a[c]) * t).round() as u8))
            }
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    /// Requested `m'`, or the node count for the full spectrum.
    pub modes: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub budget_us: f64,
    /// Largest `m'` whose p99 meets the budget.
    pub m0: Option<usize>,
    /// p50 nondecreasing in `m'`.
    pub monotone_p50: bool,
    pub threads: usize,
}

pub const SERVO_BUDGET_US: f64 = 1000.0;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[i.min(sorted.len() - 1)]
}

/// Poses scattered uniformly over the central half of the fixed grid.
pub fn random_poses(grid: &SampleGrid, count: usize, seed: u64) -> Vec<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.25 * grid.dims()[0] as f64 * grid.spacing();
    (0..count)
        .map(|_| {
            let t = Vector3::from_fn(|a, _| if a < grid.dim() { rng.gen_range(-half..half) } else { 0.0 });
            if grid.dim() == 2 {
                Configuration::planar(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI), t.x, t.y)
            } else {
                let q = UnitQuaternion::from_quaternion(Quaternion::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ));
                Configuration::from_quaternion(q, t)
            }
        })
        .collect()
}

/// Single-configuration `evaluate` latency for each `m'` (sorted ascending).
pub fn bench(fixed: &PartAsset, moving: &PartAsset, modes: &[usize], iterations: usize, seed: u64) -> Result<BenchReport> {
    let mut modes = modes.to_vec();
    modes.sort_unstable();
    modes.dedup();
    let poses = random_poses(fixed.grid(), iterations.max(1), seed);
    let mut rows = Vec::new();
    for &m in &modes {
        let ev = PairEvaluator::new(fixed, moving, Some(m), ModeSelection::Window)?;
        // Warm caches before timing.
        for p in poses.iter().take(8) {
            std::hint::black_box(ev.evaluate(p));
        }
        let mut times: Vec<f64> = poses
            .iter()
            .map(|p| {
                let t = Instant::now();
                std::hint::black_box(ev.evaluate(p));
                t.elapsed().as_secs_f64() * 1e6
            })
            .collect();
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            modes: m,
            p50_us: percentile(&times, 0.5),
            p95_us: percentile(&times, 0.95),
            p99_us: percentile(&times, 0.99),
            mean_us: times.iter().sum::<f64>() / times.len() as f64,
            iterations: times.len(),
        });
    }
    let m0 = rows.iter().filter(|r| r.p99_us <= SERVO_BUDGET_US).map(|r| r.modes).max();
    let monotone_p50 = rows.windows(2).all(|w| w[1].p50_us >= w[0].p50_us);
    Ok(BenchReport {
        rows,
        budget_us: SERVO_BUDGET_US,
        m0,
        monotone_p50,
        threads: rayon::current_num_threads(),
    })
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:>8} {:>10} {:>10} {:>10} {:>10}\n", "m'", "p50 us", "p95 us", "p99 us", "mean us");
        for r in &self.rows {
            let mark = if r.p99_us <= self.budget_us { "" } else { "  over budget" };
            s += &format!(
                "{:>8} {:>10.2} {:>10.2} {:>10.2} {:>10.2}{mark}\n",
                r.modes, r.p50_us, r.p95_us, r.p99_us, r.mean_us
            );
        }
        s += &format!(
            "m0 (largest m' with p99 <= {} us): {}\np50 monotone in m': {}\n",
            self.budget_us,
            self.m0.map_or("none".into(), |m| m.to_string()),
            self.monotone_p50
        );
        s
    }
}

/// Cross-checks of the spectral engine against the independent oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    /// Lattice configurations compared against the direct spatial sum.
    pub score_checks: usize,
    pub score_max_rel_err: f64,
    pub gradient_checks: usize,
    /// Multilinear path against five-point differences.
    pub translation_max_rel_err: f64,
    /// Direct-sampling path against central differences.
    pub rotation_max_rel_err: Option<f64>,
    /// Forward transform against the literal DFT sum; small grids only.
    pub cascade_max_abs_err: Option<f64>,
}

/// `|a - b| / |b|` over vectors of complex components.
pub fn relative_error(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Unwrapped on-node translations at lattice rotations.
pub fn lattice_configurations(ev: &PairEvaluator, count: usize, seed: u64) -> Vec<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = ev.translation_grid();
    let rotations = crate::oracle::lattice_rotations(grid.dim());
    let mut out = Vec::new();
    for _ in 0..count * 200 {
        if out.len() == count {
            break;
        }
        let r = rotations[rng.gen_range(0..rotations.len())];
        let i = rng.gen_range(0..grid.node_count());
        let c = Configuration {
            rotation: r,
            translation: grid.node_position(i).coords,
        };
        if !ev.is_wrapped(&c) {
            out.push(c);
        }
    }
    out
}

pub fn oracle_checks(
    fields: (&crate::grid::ComplexField, &crate::grid::ComplexField),
    fixed: &PartAsset,
    moving: &PartAsset,
    samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    use crate::energy::SpectralSampling;
    use crate::oracle::{self, FdScheme};

    let ev = PairEvaluator::new(fixed, moving, None, ModeSelection::Window)?;
    let dim = ev.dim();
    // The spectral score is circular and the spatial sum is linear; they
    // agree only while the moving support stays inside the grid, so the
    // score check runs on the moving field cropped to its solid's box.
    let cropped = fields.1.cropped(&moving.bbox);
    let compact = PartAsset::from_field(moving.id.clone(), &cropped, moving.bbox, false)?;
    let ev_compact = PairEvaluator::new(fixed, &compact, None, ModeSelection::Window)?;
    let mut score_max = 0.0f64;
    let lattice = lattice_configurations(&ev_compact, samples, seed);
    for c in &lattice {
        let s = ev_compact.score_at(c);
        let b = oracle::brute_score(fields.0, &cropped, c);
        score_max = score_max.max((s - b).norm() / b.norm().max(f64::MIN_POSITIVE));
    }
    let h = fixed.grid().spacing();
    let poses = random_poses(fixed.grid(), samples, seed ^ 0x9e37);
    let poses: Vec<_> = poses.into_iter().filter(|c| !ev.is_wrapped(c)).collect();
    let mut t_max = 0.0f64;
    for c in &poses {
        let g = ev.gradient(c);
        let fd = oracle::fd_gradient(|x| ev.score_at(x), c, dim, h / 10.0, 1e-3, FdScheme::Central5);
        t_max = t_max.max(relative_error(&g.translation[..dim], &fd.translation));
    }
    let rotation_max_rel_err = if ev.has_vector_spectrum() {
        let direct = ev.clone().with_sampling(SpectralSampling::Direct, moving)?;
        let axes: Vec<usize> = if dim == 3 { vec![0, 1, 2] } else { vec![2] };
        let mut r_max = 0.0f64;
        for c in &poses {
            let g = direct.gradient(c);
            let fd = oracle::fd_rotation(|x| direct.score_at(x), c, dim, 1e-3, FdScheme::Central3);
            let analytic: Vec<_> = axes.iter().map(|&a| g.rotation[a]).collect();
            r_max = r_max.max(relative_error(&analytic, &fd));
        }
        Some(r_max)
    } else {
        None
    };
    let cascade_max_abs_err = if fields.0.grid.node_count() <= oracle::CASCADE_LIMIT {
        let a = spectral::forward_dft(fields.0)?;
        let b = oracle::cascade_dft(fields.0)?;
        Some(a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(OracleReport {
        score_checks: lattice.len(),
        score_max_rel_err: score_max,
        gradient_checks: poses.len(),
        translation_max_rel_err: t_max,
        rotation_max_rel_err,
        cascade_max_abs_err,
    })
}
