//! Spectral engine against the brute-force sums and finite differences.
//!
//! `cargo run --release --example oracle_report`

use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::{pipeline, scenes};

fn main() {
    let a = scenes::peg2d().assets(32, &KernelSpec::skeletal(0.5, 3.0), &IntegrationPolicy::default()).unwrap();
    let r = pipeline::oracle_checks((&a.fixed_field.field, &a.moving_field.field), &a.fixed, &a.moving, 20, 1).unwrap();
    println!("{}", serde_json::to_string_pretty(&r).unwrap());
}
