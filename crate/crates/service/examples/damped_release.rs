//! In-process session: drag the peg above the slot, then release it and let
//! damped steps settle it.
//!
//! `cargo run --release -p geofield-service --example damped_release`

use std::sync::Arc;

use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::energy::Configuration;
use geofield::scenes;
use geofield_service::{Mode, ParamUpdate, Params, Session};

fn main() {
    let kernel = KernelSpec::skeletal(0.5, 3.0);
    let scene = scenes::peg2d();
    let a = scene.assets(128, &kernel, &IntegrationPolicy::default()).unwrap();
    let mut s = Session::new(1, Some(scene.id.into()), Arc::new(a.fixed), Arc::new(a.moving), kernel, scene.start, Params::default()).unwrap();
    for i in 0..=10 {
        let e = s.set_pose(Configuration::planar(0.0, 0.3 - 0.03 * i as f64, 1.2));
        println!("drag x {:+.2}: energy {:.4}, force x {:+.4}", 0.3 - 0.03 * i as f64, e.energy, e.force[0]);
    }
    s.set_params(&ParamUpdate {
        mode: Some(Mode::Damped),
        ..ParamUpdate::default()
    })
    .unwrap();
    s.set_pose(Configuration::planar(0.1, 0.1, 0.8));
    for frame in 0..200 {
        let e = s.step();
        if frame % 20 == 0 {
            let p = s.pose();
            println!("frame {frame:>3}: ({:+.3}, {:+.3}) theta {:+.3}, energy {:.5}", p.translation.x, p.translation.y, p.theta(), e.energy);
        }
    }
    let st = s.stats();
    println!("{} frames, p99 {:.0} us", st.frames, st.p99_us);
}
