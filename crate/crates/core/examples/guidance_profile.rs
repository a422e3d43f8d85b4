//! Energy, force and torque felt by the peg on its way into the slot.
//!
//! `cargo run --release --example guidance_profile`

use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::energy::{Configuration, PairEvaluator};
use geofield::scenes;
use geofield::spectral::ModeSelection;

fn main() {
    let scene = scenes::peg2d();
    let a = scene.assets(128, &KernelSpec::skeletal(0.5, 3.0), &IntegrationPolicy::default()).unwrap();
    let ev = PairEvaluator::new(&a.fixed, &a.moving, Some(4096), ModeSelection::Window).unwrap();
    println!("{:>6} {:>10} {:>10} {:>10}", "y", "energy", "force y", "us");
    for i in 0..=20 {
        let y = 2.0 - 0.1 * i as f64;
        let e = ev.evaluate(&Configuration::planar(0.0, 0.0, y));
        println!("{y:>6.2} {:>10.5} {:>10.5} {:>10.1}", e.energy, e.force[1], e.eval_time_us);
    }
    // A tilted, offset peg is pushed back toward the slot axis and upright.
    let e = ev.evaluate(&Configuration::planar(0.2, 0.15, 0.6));
    println!("tilted 0.2 rad at x 0.15: force x {:.5}, torque {:.5}", e.force[0], e.torque[2]);
}
