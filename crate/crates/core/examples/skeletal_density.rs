//! Affinity field of the slotted block, written as two heatmaps.
//!
//! `cargo run --release --example skeletal_density -- [out_dir]`

use std::path::PathBuf;

use geofield::descriptor::{affinity_field, IntegrationPolicy, KernelSpec};
use geofield::{pipeline, scenes};

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("geofield-density"));
    std::fs::create_dir_all(&out).unwrap();
    let scene = scenes::peg2d();
    let grid = scene.grid(128).unwrap();
    let f = affinity_field(&scene.fixed, &grid, &KernelSpec::skeletal(0.5, 3.0), &IntegrationPolicy::default()).unwrap();
    let [w, h, _] = grid.dims();
    let re: Vec<_> = f.field.values.iter().map(|v| Some(v.re)).collect();
    let abs: Vec<_> = f.field.values.iter().map(|v| Some(v.norm().ln_1p())).collect();
    pipeline::heatmap(&re, w, h).save(out.join("block_re.png")).unwrap();
    pipeline::heatmap(&abs, w, h).save(out.join("block_abs.png")).unwrap();
    let peak = (0..grid.node_count()).max_by(|&a, &b| f.field.values[a].norm().total_cmp(&f.field.values[b].norm())).unwrap();
    println!(
        "{} boundary nodes, {} quadrature samples, peak |rho| at {:?}",
        f.boundary_nodes.len(),
        f.stats.samples,
        grid.node_position(peak)
    );
    println!("heatmaps in {}", out.display());
}
