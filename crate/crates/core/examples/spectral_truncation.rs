//! How much of a descriptor's spectral energy a centered window keeps.
//!
//! `cargo run --release --example spectral_truncation`

use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::energy::PairEvaluator;
use geofield::scenes;
use geofield::spectral::{self, ModeSelection};

fn main() {
    let scene = scenes::peg2d();
    let a = scene.assets(256, &KernelSpec::skeletal(0.5, 3.0), &IntegrationPolicy::default()).unwrap();
    let full = PairEvaluator::new(&a.fixed, &a.moving, None, ModeSelection::Window).unwrap();
    let reference = full.evaluate(&scene.start);
    println!("{:>7} {:>9} {:>9} {:>12} {:>12}", "m'", "window", "ranked", "energy", "force y");
    for m in [16, 64, 256, 1024, 4096, 16384] {
        let window = spectral::energy_fraction(&a.fixed.spectrum, &spectral::truncate(&a.fixed.spectrum, m).unwrap());
        let ranked = spectral::energy_fraction(&a.fixed.spectrum, &spectral::truncate_ranked(&a.fixed.spectrum, m).unwrap());
        let e = PairEvaluator::new(&a.fixed, &a.moving, Some(m), ModeSelection::Window).unwrap().evaluate(&scene.start);
        println!("{m:>7} {window:>9.5} {ranked:>9.5} {:>12.5} {:>12.5}", e.energy, e.force[1]);
    }
    println!("{:>7} {:>9} {:>9} {:>12.5} {:>12.5}", "full", 1, 1, reference.energy, reference.force[1]);
}
