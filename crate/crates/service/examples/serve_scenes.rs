//! Session server with the built-in scenes on `127.0.0.1:<port>`.
//!
//! `cargo run --release -p geofield-service --example serve_scenes -- [port]`

use geofield_service::{serve, ServeConfig};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    env_logger::init();
    let port: u16 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8080);
    let addr = ([127, 0, 0, 1], port).into();
    println!("GET http://{addr}/scenes, WebSocket ws://{addr}/ws");
    serve(addr, ServeConfig::default()).await
}
