//! Precompute a scene to disk, reload it through the manifest and evaluate.
//!
//! `cargo run --release --example precompute_assets -- [out_dir]`

use std::path::PathBuf;

use geofield::assets::AssetManifest;
use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::energy::PairEvaluator;
use geofield::spectral::ModeSelection;
use geofield::{pipeline, scenes};

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("geofield-assets"));
    let scene = scenes::peg2d();
    let report = pipeline::precompute_scene(&scene, 128, &KernelSpec::skeletal(0.5, 3.0), &IntegrationPolicy::default(), &out).unwrap();
    for (id, t) in &report.timings {
        println!("{id}: field {:.0} ms, transform {:.0} ms, write {:.0} ms", t.field_ms, t.transform_ms, t.write_ms);
    }
    let (manifest, dir) = AssetManifest::load(&out).unwrap();
    for p in &manifest.parts {
        println!("{}: {} boundary nodes, spectrum sha256 {}", p.id, p.boundary_nodes, &p.spectrum.sha256[..16]);
    }
    let (fixed, moving) = manifest.load_pair(&dir, "fixed", "moving").unwrap();
    let e = PairEvaluator::new(&fixed, &moving, Some(4096), ModeSelection::Window).unwrap().evaluate(&scene.start);
    println!("start pose: {}", serde_json::to_string(&pipeline::EvalRecord::from(e)).unwrap());
}
