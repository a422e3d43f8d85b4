//! `geofield`: precompute assets, export landscapes, evaluate poses,
//! benchmark, run oracle checks and serve interactive sessions.
//!
//! Machine-readable results go to stdout as JSON lines; tables and timings
//! go to stderr. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::Serialize;

use geofield::assets::AssetManifest;
use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::energy::{Configuration, PairEvaluator};
use geofield::pipeline::{self, EvalRecord, PoseSpec};
use geofield::scenes;
use geofield::spectral::{planar_rotation, ModeSelection};
use geofield_service::server::ServeConfig;
use geofield_service::session::Params;

#[derive(Parser)]
#[command(name = "geofield", version, about = "Geometric guidance energies from spectral correlation")]
struct Cli {
    /// Worker threads for field computation and transforms.
    #[arg(long, global = true, env = "GEOFIELD_THREADS")]
    threads: Option<usize>,
    /// Start the session server on this port (same as `serve --port`).
    #[arg(long, value_name = "PORT")]
    serve: Option<u16>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute descriptor fields and spectra, write assets and a manifest.
    Precompute(PrecomputeArgs),
    /// Export the Re-score landscape over translations at one rotation.
    Field(FieldArgs),
    /// Evaluate score, energy, force and torque at one configuration.
    Eval(EvalArgs),
    /// Per-m' evaluation latency percentiles.
    Bench(BenchArgs),
    /// Compare the spectral engine against the brute-force oracles.
    Oracle(OracleArgs),
    /// Serve interactive sessions over WebSocket.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Skeletal,
    RealSkeletal,
    InverseSquare,
}

#[derive(Args, Clone)]
struct KernelArgs {
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Penalty factor lambda_out / lambda_in (lambda_in = 1).
    #[arg(long, default_value_t = 3.0)]
    penalty: f64,
    #[arg(long, value_enum, default_value_t = Family::Skeletal)]
    kernel: Family,
}

impl KernelArgs {
    fn spec(&self) -> KernelSpec {
        match self.kernel {
            Family::Skeletal => KernelSpec::skeletal(self.sigma, self.penalty),
            Family::RealSkeletal => KernelSpec::real_skeletal(self.sigma, self.penalty),
            Family::InverseSquare => KernelSpec::inverse_square(),
        }
    }
}

#[derive(Args)]
struct PrecomputeArgs {
    /// Solid files (.obj, .stl, polygon .json); ids are the file stems.
    solids: Vec<PathBuf>,
    /// Built-in scene instead of solid files.
    #[arg(long, conflicts_with = "solids")]
    scene: Option<String>,
    /// Nodes per axis.
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PairArgs {
    /// Manifest file or the directory holding `manifest.json`.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "fixed")]
    fixed: String,
    #[arg(long, default_value = "moving")]
    moving: String,
    /// Retained modes m'; all modes when omitted.
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Args)]
struct FieldArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Planar angle in radians, or a quaternion `w,x,y,z`.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    rotation: String,
    /// z index of the exported heatmap for 3D pairs.
    #[arg(long)]
    slice: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Pose as JSON: {"theta","x","y"}, {"quaternion","translation"} or {"rotation","translation"}.
    #[arg(long, conflicts_with_all = ["rotation", "translation"])]
    config: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    rotation: Option<String>,
    /// `x,y` or `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    translation: Option<String>,
    /// Also report the brute-force spatial sum.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Comma-separated m' values.
    #[arg(long, default_value = "1,64,256,1024,4096,16384")]
    modes_list: String,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    /// Directory for `bench.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Nodes per axis for built-in scenes.
    #[arg(long, default_value_t = 256)]
    grid: usize,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Initial m'.
    #[arg(long, default_value_t = 4096)]
    modes: usize,
    /// Directory of the UI bundle.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

/// Domain failures exit with 1, usage failures with 2.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

impl From<geofield::Error> for Failure {
    fn from(e: geofield::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<geofield::error::EnergyError> for Failure {
    fn from(e: geofield::error::EnergyError) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn emit<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("results serialize"));
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad {what} {s:?}"))))
        .collect()
}

fn parse_rotation(s: &str) -> Result<Matrix3<f64>, Failure> {
    match parse_floats(s, "rotation")?.as_slice() {
        [theta] => Ok(planar_rotation(*theta)),
        [w, x, y, z] => {
            let q = Quaternion::new(*w, *x, *y, *z);
            if !(q.norm() > 0.0) {
                return Err(Failure::Usage("zero quaternion".into()));
            }
            Ok(UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner())
        }
        _ => Err(Failure::Usage(format!("rotation {s:?} is neither an angle nor w,x,y,z"))),
    }
}

fn parse_translation(s: &str) -> Result<Vector3<f64>, Failure> {
    match parse_floats(s, "translation")?.as_slice() {
        [x, y] => Ok(Vector3::new(*x, *y, 0.0)),
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(Failure::Usage(format!("translation {s:?} needs 2 or 3 components"))),
    }
}

struct Loaded {
    manifest: AssetManifest,
    dir: PathBuf,
    fixed: geofield::energy::PartAsset,
    moving: geofield::energy::PartAsset,
}

fn load_pair(p: &PairArgs) -> Result<Loaded, Failure> {
    let (manifest, dir) = AssetManifest::load(&p.manifest)?;
    let (fixed, moving) = manifest.load_pair(&dir, &p.fixed, &p.moving)?;
    Ok(Loaded {
        manifest,
        dir,
        fixed,
        moving,
    })
}

fn precompute(a: PrecomputeArgs) -> Outcome {
    let kernel = a.kernel.spec();
    kernel.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let policy = IntegrationPolicy::default();
    let report = match (&a.scene, a.solids.is_empty()) {
        (Some(id), _) => {
            let scene = scenes::builtin(id).ok_or_else(|| Failure::Usage(format!("unknown scene {id:?}")))?;
            pipeline::precompute_scene(&scene, a.grid, &kernel, &policy, &a.out)?
        }
        (None, false) => {
            let parts = pipeline::load_solids(&a.solids)?;
            let refs: Vec<_> = parts.iter().map(|(_, s)| s).collect();
            let grid = pipeline::shared_grid(&refs, a.grid)?;
            pipeline::precompute_solids(&parts, &grid, &kernel, &policy, None, &a.out)?
        }
        (None, true) => return Err(Failure::Usage("give solid files or --scene".into())),
    };
    for (id, t) in &report.timings {
        eprintln!(
            "{id:>10}: load {:8.1} ms  field {:9.1} ms  transform {:8.1} ms  write {:7.1} ms",
            t.load_ms, t.field_ms, t.transform_ms, t.write_ms
        );
    }
    emit(&report);
    Ok(())
}

fn field(a: FieldArgs) -> Outcome {
    let l = load_pair(&a.pair)?;
    let r = parse_rotation(&a.rotation)?;
    let ev = PairEvaluator::new(&l.fixed, &l.moving, a.pair.modes, ModeSelection::Window)?;
    let sf = ev.score_field(&r)?;
    let kernel = l.manifest.part(&a.pair.fixed)?.kernel;
    let stem = "landscape";
    let meta = pipeline::export_landscape(&sf, &kernel, (&a.pair.fixed, &a.pair.moving), a.slice, &a.out, stem)?;
    if let Some(m) = &meta.argmax {
        eprintln!("argmax at {:?}, Re score {:.6}", m.translation, m.score_re);
    } else {
        eprintln!("every translation is wrap-contaminated");
    }
    emit(&meta);
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    eval: EvalRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleScore>,
}

/// Linear spatial sum. It matches the circular spectral score only at
/// lattice poses whose wrapped field tails are negligible.
#[derive(Serialize)]
struct OracleScore {
    brute_re: f64,
    brute_im: f64,
    /// Rotation and translation map nodes to nodes.
    lattice: bool,
}

fn eval(a: EvalArgs) -> Outcome {
    // Parse the pose before touching assets so usage errors win.
    enum Pose {
        Spec(PoseSpec),
        Parts(Matrix3<f64>, Vector3<f64>),
    }
    let pose = match &a.config {
        Some(json) => Pose::Spec(serde_json::from_str(json).map_err(|e| Failure::Usage(format!("malformed config JSON: {e}")))?),
        None => Pose::Parts(
            a.rotation.as_deref().map(parse_rotation).transpose()?.unwrap_or_else(Matrix3::identity),
            a.translation.as_deref().map(parse_translation).transpose()?.unwrap_or_else(Vector3::zeros),
        ),
    };
    let l = load_pair(&a.pair)?;
    let dim = l.fixed.grid().dim();
    let config = match pose {
        Pose::Spec(s) => s.to_configuration(dim).map_err(|e| Failure::Usage(e.to_string()))?,
        Pose::Parts(r, t) => Configuration::new(r, t, dim).map_err(|e| Failure::Usage(e.to_string()))?,
    };
    let ev = PairEvaluator::new(&l.fixed, &l.moving, a.pair.modes, ModeSelection::Window)?;
    let e = ev.evaluate(&config);
    let oracle = if a.oracle {
        let f1 = l.manifest.load_field(&l.dir, &a.pair.fixed)?;
        let f2 = l.manifest.load_field(&l.dir, &a.pair.moving)?;
        let b = geofield::oracle::brute_score(&f1, &f2, &config);
        let h = l.fixed.grid().spacing();
        let on_node = config.translation.iter().all(|t| ((t / h).round() - t / h).abs() < 1e-9);
        let lattice = on_node
            && geofield::oracle::lattice_rotations(dim)
                .iter()
                .any(|r| (r - config.rotation).abs().max() < 1e-12);
        Some(OracleScore {
            brute_re: b.re,
            brute_im: b.im,
            lattice,
        })
    } else {
        None
    };
    emit(&EvalOutput { eval: e.into(), oracle });
    Ok(())
}

fn bench(a: BenchArgs) -> Outcome {
    let l = load_pair(&a.pair)?;
    let modes: Vec<usize> = a
        .modes_list
        .split(',')
        .map(|m| m.trim().parse().map_err(|_| Failure::Usage(format!("bad m' list {:?}", a.modes_list))))
        .collect::<Result<_, _>>()?;
    let report = pipeline::bench(&l.fixed, &l.moving, &modes, a.iterations, 11)?;
    eprint!("{}", report.table());
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("bench.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
        eprintln!("report written to {}", path.display());
    }
    emit(&report);
    Ok(())
}

fn oracle(a: OracleArgs) -> Outcome {
    let l = load_pair(&a.pair)?;
    let f1 = l.manifest.load_field(&l.dir, &a.pair.fixed)?;
    let f2 = l.manifest.load_field(&l.dir, &a.pair.moving)?;
    let report = pipeline::oracle_checks((&f1, &f2), &l.fixed, &l.moving, a.samples, a.seed)?;
    emit(&report);
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Failure::Usage(format!("bad address: {e}")))?;
    let kernel = a.kernel.spec();
    kernel.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(dir) = &a.static_dir {
        if !Path::new(dir).is_dir() {
            return Err(Failure::Usage(format!("{} is not a directory", dir.display())));
        }
    }
    let config = ServeConfig {
        grid: a.grid,
        kernel,
        policy: IntegrationPolicy::default(),
        params: Params {
            modes: a.modes,
            ..Params::default()
        },
        static_dir: a.static_dir,
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    eprintln!("serving on http://{addr} (WebSocket at /ws)");
    rt.block_on(geofield_service::serve(addr, config))?;
    Ok(())
}

fn default_serve(port: u16) -> ServeArgs {
    ServeArgs {
        port,
        host: "127.0.0.1".into(),
        grid: 256,
        kernel: KernelArgs {
            sigma: 0.5,
            penalty: 3.0,
            kernel: Family::Skeletal,
        },
        modes: 4096,
        static_dir: None,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match (cli.command, cli.serve) {
        (Some(_), Some(_)) => Err(Failure::Usage("--serve cannot be combined with a subcommand".into())),
        (None, Some(port)) => serve(default_serve(port)),
        (None, None) => Err(Failure::Usage("no command given; see --help".into())),
        (Some(cmd), None) => match cmd {
            Command::Precompute(a) => precompute(a),
            Command::Field(a) => field(a),
            Command::Eval(a) => eval(a),
            Command::Bench(a) => bench(a),
            Command::Oracle(a) => oracle(a),
            Command::Serve(a) => serve(a),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use geofield::descriptor::KernelFamily;

    #[test]
    fn rotation_and_translation_parsing() {
        assert!((parse_rotation("0.5").unwrap() - planar_rotation(0.5)).norm() < 1e-15);
        assert_eq!(parse_rotation("1,0,0,0").unwrap(), Matrix3::identity());
        assert!(parse_rotation("1,2").is_err());
        assert!(parse_rotation("0,0,0,0").is_err());
        assert_eq!(parse_translation("1,-2").unwrap(), Vector3::new(1.0, -2.0, 0.0));
        assert!(parse_translation("x,1").is_err());
    }

    #[test]
    fn kernel_flags() {
        let k = KernelArgs {
            sigma: 0.5,
            penalty: 3.0,
            kernel: Family::RealSkeletal,
        };
        assert_eq!(k.spec().family, KernelFamily::RealSkeletal);
        assert_eq!(k.spec().lambda_out, 3.0);
    }
}
