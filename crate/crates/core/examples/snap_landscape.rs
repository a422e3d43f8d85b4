//! Energy landscape of the peg over all translations, exported to disk.
//!
//! `cargo run --release --example snap_landscape -- [out_dir]`

use std::path::PathBuf;

use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::energy::PairEvaluator;
use geofield::spectral::{planar_rotation, ModeSelection};
use geofield::{pipeline, scenes};

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("geofield-landscape"));
    let kernel = KernelSpec::skeletal(0.5, 3.0);
    let scene = scenes::peg2d();
    let a = scene.assets(128, &kernel, &IntegrationPolicy::default()).unwrap();
    let ev = PairEvaluator::new(&a.fixed, &a.moving, None, ModeSelection::Window).unwrap();
    for theta in [0.0, 0.3, std::f64::consts::FRAC_PI_2] {
        let sf = ev.score_field(&planar_rotation(theta)).unwrap();
        let stem = format!("theta_{theta:.2}");
        let meta = pipeline::export_landscape(&sf, &kernel, ("fixed", "moving"), None, &out, &stem).unwrap();
        let arg = meta.argmax.unwrap();
        println!("theta {theta:.2}: minimum energy {:.5} at {:?}, {} masked cells", -arg.score_re, &arg.translation[..2], meta.masked);
    }
    println!("snap is {:?}; files in {}", &scene.snap.translation.as_slice()[..2], out.display());
}
