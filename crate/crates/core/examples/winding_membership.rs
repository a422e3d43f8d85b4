//! Point membership by winding number, checked against ray-cast parity.
//!
//! `cargo run --release --example winding_membership`

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geofield::descriptor::{point_membership, IntegrationPolicy};
use geofield::{oracle, shapes};

fn main() {
    let policy = IntegrationPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (name, solid) in [
        ("icosphere", shapes::solid(shapes::icosphere(1.0, 2))),
        ("l-bracket", shapes::solid(shapes::l_bracket())),
    ] {
        let b = solid.bounding_box();
        let (mut inside, mut disagree) = (0, 0);
        for _ in 0..2000 {
            let p = Point3::new(
                rng.gen_range(b.min.x - 0.3..b.max.x + 0.3),
                rng.gen_range(b.min.y - 0.3..b.max.y + 0.3),
                rng.gen_range(b.min.z - 0.3..b.max.z + 0.3),
            );
            let w = point_membership(&solid, &p, &policy).unwrap();
            inside += usize::from(w >= 0.5);
            disagree += usize::from((w >= 0.5) != oracle::raycast_pmc(&solid, &p));
        }
        println!("{name:>10}: {inside} of 2000 inside, {disagree} disagreements with ray casting");
    }
}
