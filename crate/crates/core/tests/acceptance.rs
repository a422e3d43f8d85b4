//! Acceptance gate. Each test writes one `PASS`/`FAIL` line straight to the
//! stderr handle (not captured by the harness) before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{Matrix3, Point2, Point3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geofield::descriptor::{affinity_field, indicator_field, point_membership, IntegrationPolicy, KernelSpec};
use geofield::energy::{Configuration, PairEvaluator, PartAsset, SpectralSampling};
use geofield::grid::{ComplexField, SampleGrid};
use geofield::oracle::{self, FdScheme};
use geofield::pipeline::{self, relative_error};
use geofield::scenes::{self, SceneAssets};
use geofield::shapes;
use geofield::solids::Solid;
use geofield::spectral::{self, ModeSelection};

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "[acceptance {n}] {verdict} {title}: {detail}").unwrap();
}

fn policy() -> IntegrationPolicy {
    IntegrationPolicy::default()
}

fn demo_kernel() -> KernelSpec {
    KernelSpec::skeletal(0.5, 3.0)
}

fn peg(n: usize) -> &'static SceneAssets {
    static P64: OnceLock<SceneAssets> = OnceLock::new();
    static P128: OnceLock<SceneAssets> = OnceLock::new();
    static P512: OnceLock<SceneAssets> = OnceLock::new();
    let cell = match n {
        64 => &P64,
        128 => &P128,
        512 => &P512,
        _ => unreachable!("no cache for {n}"),
    };
    cell.get_or_init(|| scenes::peg2d().assets(n, &demo_kernel(), &policy()).unwrap())
}

/// Spectral score vs the spatial sum on one pair, at lattice poses whose
/// cropped moving support stays inside the grid.
fn equivalence_on_pair(fixed: &Solid, moving: &Solid, n: usize, configs: usize, seed: u64) -> (usize, f64) {
    let grid = pipeline::shared_grid(&[fixed, moving], n).unwrap();
    let f1 = affinity_field(fixed, &grid, &demo_kernel(), &policy()).unwrap().field;
    let f2 = affinity_field(moving, &grid, &demo_kernel(), &policy()).unwrap().field.cropped(&moving.bounding_box());
    let a = PartAsset::from_field("fixed", &f1, fixed.bounding_box(), false).unwrap();
    let b = PartAsset::from_field("moving", &f2, moving.bounding_box(), false).unwrap();
    let ev = PairEvaluator::new(&a, &b, None, ModeSelection::Window).unwrap();
    let poses = pipeline::lattice_configurations(&ev, configs, seed);
    let worst = poses
        .iter()
        .map(|c| {
            let s = ev.score_at(c);
            let brute = oracle::brute_score(&f1, &f2, c);
            (s - brute).norm() / brute.norm()
        })
        .fold(0.0, f64::max);
    (poses.len(), worst)
}

#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = Vec::new();
    for k in 0..5 {
        let a = Solid::from_polygon(shapes::random_star_polygon(&mut rng, Point2::origin(), 1.5));
        let b = Solid::from_polygon(shapes::random_convex_polygon(&mut rng, Point2::origin(), 0.8));
        let (count, err) = equivalence_on_pair(&a, &b, 32, 100, 10 + k);
        checked.push(count);
        worst = worst.max(err);
    }
    let pairs3 = [
        (shapes::solid(shapes::l_bracket()), shapes::solid(shapes::unit_cube())),
        (shapes::solid(shapes::box_mesh(Point3::new(-1.0, -1.0, -0.5), Point3::new(1.0, 1.0, 0.5))), shapes::solid(shapes::icosphere(0.4, 1))),
    ];
    for (k, (a, b)) in pairs3.iter().enumerate() {
        let (count, err) = equivalence_on_pair(a, b, 32, 100, 20 + k as u64);
        checked.push(count);
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && checked.iter().all(|&c| c == 100) && secs < 120.0;
    report(
        1,
        "oracle equivalence",
        pass,
        &format!("7 pairs x {checked:?} lattice poses, max rel err {worst:.2e} (tol 1e-9), {secs:.1} s (limit 120 s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_winding_number_pmc() {
    let solids = [
        ("cube", shapes::solid(shapes::unit_cube())),
        ("icosphere", shapes::solid(shapes::icosphere(1.0, 2))),
        ("l-bracket", shapes::solid(shapes::l_bracket())),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, solid) in &solids {
        let b = solid.bounding_box();
        let margin = 0.2 * b.diagonal();
        let (mut agree, mut total, mut worst_in, mut worst_out) = (0, 0, 0.0f64, 0.0f64);
        while total < 10_000 {
            let mut p = Point3::origin();
            for k in 0..3 {
                p[k] = rng.gen_range(b.min[k] - margin..b.max[k] + margin);
            }
            if solid.unsigned_distance(&p) < 1e-3 * b.diagonal() {
                continue;
            }
            total += 1;
            let w = point_membership(solid, &p, &policy()).unwrap();
            let inside = oracle::raycast_pmc(solid, &p);
            if (w >= 0.5) == inside {
                agree += 1;
            }
            if inside {
                worst_in = worst_in.max((w - 1.0).abs());
            } else {
                worst_out = worst_out.max(w.abs());
            }
        }
        pass &= agree == total && worst_in <= 0.05 && worst_out <= 0.05;
        lines.push(format!("{name} {agree}/{total} agree, |w-1| <= {worst_in:.1e}, |w| <= {worst_out:.1e}"));
    }
    report(2, "winding-number PMC", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_3_gradient_checks() {
    let start = Instant::now();
    let a = peg(64);
    let ev = PairEvaluator::new(&a.fixed, &a.moving, None, ModeSelection::Window).unwrap();
    let direct = ev.clone().with_sampling(SpectralSampling::Direct, &a.moving).unwrap();
    let h = a.fixed.grid().spacing();
    let poses: Vec<_> = pipeline::random_poses(a.fixed.grid(), 400, 3).into_iter().filter(|c| !ev.is_wrapped(c)).take(50).collect();
    let (mut t_err, mut r_err, mut r_multilinear) = (0.0f64, 0.0f64, 0.0f64);
    for c in &poses {
        let g = ev.gradient(c);
        let fd = oracle::fd_gradient(|x| ev.score_at(x), c, 2, h / 10.0, 1e-3, FdScheme::Central5);
        t_err = t_err.max(relative_error(&g.translation[..2], &fd.translation));
        r_multilinear = r_multilinear.max(relative_error(&g.rotation[2..], &fd.rotation));
        let gd = direct.gradient(c);
        let fdd = oracle::fd_rotation(|x| direct.score_at(x), c, 2, 1e-3, FdScheme::Central3);
        r_err = r_err.max(relative_error(&gd.rotation[2..], &fdd));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = poses.len() == 50 && t_err <= 1e-4 && r_err <= 1e-3 && secs < 60.0;
    report(
        3,
        "gradient checks",
        pass,
        &format!(
            "{} poses at 64^2: translation {t_err:.2e} (tol 1e-4), rotation {r_err:.2e} (tol 1e-3, exact rotated transform; multilinear spectral rotation gives {r_multilinear:.2e}), {secs:.1} s (limit 60 s)",
            poses.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_indicator_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scene = scenes::peg2d();
    let mut pairs = vec![(scene.fixed.clone(), scene.moving.clone())];
    for _ in 0..3 {
        pairs.push((
            Solid::from_polygon(shapes::random_star_polygon(&mut rng, Point2::origin(), 1.2)),
            Solid::from_polygon(shapes::random_convex_polygon(&mut rng, Point2::origin(), 0.9)),
        ));
    }
    let (mut worst, mut tested, mut overlapping) = (0.0f64, 0, 0);
    let mut cell = 0.0;
    for (k, (s1, s2)) in pairs.iter().enumerate() {
        let grid = pipeline::shared_grid(&[s1, s2], 64).unwrap();
        cell = grid.cell_volume();
        let i1 = indicator_field(s1, &grid, &policy()).unwrap();
        let i2 = indicator_field(s2, &grid, &policy()).unwrap();
        let a = PartAsset::from_field("a", &i1, s1.bounding_box(), false).unwrap();
        let b = PartAsset::from_field("b", &i2, s2.bounding_box(), false).unwrap();
        let ev = PairEvaluator::new(&a, &b, None, ModeSelection::Window).unwrap();
        for c in pipeline::lattice_configurations(&ev, 25, 40 + k as u64) {
            let s = ev.score_at(&c);
            let v = oracle::intersection_volume(s1, s2, &c, &grid);
            worst = worst.max((s.re - v).abs() / grid.cell_volume()).max(s.im.abs() / grid.cell_volume());
            tested += 1;
            overlapping += usize::from(v > 0.0);
        }
    }
    let pass = worst <= 1.0 && overlapping > 0;
    report(
        4,
        "indicator semantics",
        pass,
        &format!("{tested} lattice poses ({overlapping} overlapping), max |score - volume| = {worst:.2e} cells (tol 1 cell = {cell:.3e})"),
    );
    assert!(pass);
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn sigma_limit_correlation(solid: &Solid, grid: &SampleGrid, kernel: &KernelSpec) -> f64 {
    let field = affinity_field(solid, grid, kernel, &policy()).unwrap().field;
    let ind = indicator_field(solid, grid, &policy()).unwrap();
    let h = grid.spacing();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..grid.node_count() {
        if solid.unsigned_distance(&grid.node_position(i)) > h {
            x.push(field.values[i].re);
            y.push(ind.values[i].re);
        }
    }
    pearson(&x, &y)
}

#[test]
fn criterion_5_sigma_limit() {
    let scene = scenes::peg2d();
    let grid = scene.grid(64).unwrap();
    let real = [&scene.fixed, &scene.moving].map(|s| sigma_limit_correlation(s, &grid, &KernelSpec::real_skeletal(1e3, 3.0)));
    let complex = [&scene.fixed, &scene.moving].map(|s| sigma_limit_correlation(s, &grid, &KernelSpec::skeletal(1e3, 3.0)));
    let pass = real.iter().all(|&r| r >= 0.99);
    report(
        5,
        "sigma limit",
        pass,
        &format!(
            "real skeletal kernel at sigma 1e3: Pearson {:.5} / {:.5} (tol 0.99); complex zeta^-2 kernel, Re part: {:.3} / {:.3} (not asserted)",
            real[0], real[1], complex[0], complex[1]
        ),
    );
    assert!(pass);
}

fn argmax_cell(ev: &PairEvaluator) -> [usize; 3] {
    let sf = ev.score_field(&Matrix3::identity()).unwrap();
    sf.field.grid.unflatten(sf.argmax().expect("some unwrapped translation"))
}

#[test]
fn criterion_6_truncation_stability() {
    let a = peg(512);
    let at = |modes: Option<usize>, selection| argmax_cell(&PairEvaluator::new(&a.fixed, &a.moving, modes, selection).unwrap());
    let full = at(None, ModeSelection::Window);
    let offset = |c: [usize; 3]| (c[0] as i64 - full[0] as i64, c[1] as i64 - full[1] as i64);
    let asserted: Vec<_> = [256, 1024, 4096].iter().map(|&m| (m, offset(at(Some(m), ModeSelection::Window)))).collect();
    let recorded = offset(at(Some(64), ModeSelection::Window));
    let ranked: Vec<_> = [64, 256, 1024, 4096].iter().map(|&m| (m, offset(at(Some(m), ModeSelection::Ranked)))).collect();
    let pass = asserted.iter().all(|(_, o)| *o == (0, 0));
    report(
        6,
        "truncation stability",
        pass,
        &format!(
            "512^2, full-spectrum argmax cell {:?}; argmax offsets (dx, dy) in cells for m' 256/1024/4096: {:?} (must all be (0, 0)); m' 64: {recorded:?} (recorded, drift <= 2 allowed); ranked selection: {ranked:?}",
            &full[..2],
            asserted
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_snap_well() {
    let scene = scenes::peg2d();
    let mut lines = Vec::new();
    let mut pass = true;
    for n in [64, 128] {
        let a = peg(n);
        let ev = PairEvaluator::new(&a.fixed, &a.moving, None, ModeSelection::Window).unwrap();
        let sf = ev.score_field(&scene.snap.rotation).unwrap();
        let fast = sf.argmax().unwrap();
        // Exhaustive search: evaluate the pose sum at every unwrapped node.
        let grid = sf.field.grid;
        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..grid.node_count() {
            let c = Configuration {
                rotation: scene.snap.rotation,
                translation: grid.node_position(i).coords,
            };
            if ev.is_wrapped(&c) {
                continue;
            }
            let s = ev.score_at(&c).re;
            if s > best.0 {
                best = (s, i);
            }
        }
        let found = grid.node_position(best.1).coords;
        let off = (found - scene.snap.translation).abs().max() / grid.spacing();
        pass &= best.1 == fast && off <= 1.0;
        lines.push(format!("{n}^2: minimum at {:?} ({off:.1} cells from snap, tol 1), landscape argmax agrees: {}", &found.as_slice()[..2], best.1 == fast));
    }
    report(7, "snap well", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_8_real_time_budget() {
    let a = peg(512);
    let modes = [64, 256, 1024, 4096, 16384];
    let r = pipeline::bench(&a.fixed, &a.moving, &modes, 2000, 8).unwrap();
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bench.json");
    std::fs::write(&path, serde_json::to_string_pretty(&r).unwrap()).unwrap();
    let row = r.rows.iter().find(|row| row.modes == 4096).unwrap();
    let pass = r.monotone_p50 && path.exists();
    report(
        8,
        "real-time budget",
        pass,
        &format!(
            "512^2 pair, m' 4096: p50 {:.0} us, p99 {:.0} us (soft target < 1000 us, {}); p50 monotone in m': {}; report at {}",
            row.p50_us,
            row.p99_us,
            if row.p99_us < 1000.0 { "met" } else { "missed" },
            r.monotone_p50,
            path.display()
        ),
    );
    eprint!("{}", r.table());
    assert!(pass);
}

fn random_field(grid: SampleGrid, rng: &mut ChaCha8Rng) -> ComplexField {
    let values = (0..grid.node_count()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    ComplexField::new(grid, values)
}

#[test]
fn criterion_9_transform_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scene = scenes::peg2d();
    let mut fields = vec![
        random_field(SampleGrid::centered(2, 16, 0.3).unwrap(), &mut rng),
        random_field(SampleGrid::centered(2, 64, 0.1).unwrap(), &mut rng),
        random_field(SampleGrid::centered(3, 16, 0.2).unwrap(), &mut rng),
        peg(64).fixed_field.field.clone(),
    ];
    let g16 = scene.grid(16).unwrap();
    fields.push(affinity_field(&scene.fixed, &g16, &demo_kernel(), &policy()).unwrap().field);
    let (mut roundtrip, mut parseval, mut cascade) = (0.0f64, 0.0f64, 0.0f64);
    for f in &fields {
        let s = spectral::forward_dft(f).unwrap();
        let back = spectral::inverse_dft(&s).unwrap();
        roundtrip = roundtrip.max(f.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        let spatial: f64 = f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * f.grid.cell_volume();
        parseval = parseval.max((spatial - s.energy()).abs() / spatial);
        if f.grid.dims() == [16, 16, 1] {
            let c = oracle::cascade_dft(f).unwrap();
            cascade = cascade.max(s.amplitudes.iter().zip(&c.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        }
    }
    let pass = roundtrip <= 1e-12 && parseval <= 1e-9 && cascade <= 1e-10;
    report(
        9,
        "round trip / Parseval / DFT",
        pass,
        &format!("{} fields: round trip {roundtrip:.1e} (tol 1e-12), Parseval {parseval:.1e} (tol 1e-9), fast vs cascade on 16^2 {cascade:.1e} (tol 1e-10)", fields.len()),
    );
    assert!(pass);
}
