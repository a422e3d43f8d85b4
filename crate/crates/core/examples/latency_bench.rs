//! Single-pose evaluation latency against the number of retained modes.
//!
//! `cargo run --release --example latency_bench -- [grid]`

use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::{pipeline, scenes};

fn main() {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let a = scenes::peg2d().assets(n, &KernelSpec::skeletal(0.5, 3.0), &IntegrationPolicy::default()).unwrap();
    let r = pipeline::bench(&a.fixed, &a.moving, &[16, 64, 256, 1024, 4096, 16384], 2000, 0).unwrap();
    print!("{}", r.table());
}
