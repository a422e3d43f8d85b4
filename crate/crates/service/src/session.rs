//! One interactive session: a loaded part pair, the live evaluator and the
//! current pose.

use std::collections::VecDeque;
use std::sync::Arc;

use base64::Engine;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use geofield::descriptor::KernelSpec;
use geofield::energy::{Configuration, EnergyEval, PairEvaluator, PartAsset};
use geofield::pipeline::landscape_argmax;
use geofield::spectral::{planar_rotation, ModeSelection};
use geofield::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Every pose comes from the client.
    #[default]
    Direct,
    /// First-order damped motion along the guidance force.
    Damped,
}

/// Parameters a client may change mid-session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub modes: usize,
    pub mode: Mode,
    /// Damping coefficient `c` of `dx = F / c dt`.
    pub damping: f64,
    /// Client-side force glyph scale; never applied to core values.
    pub display_scale: f64,
    /// Frame time of damped steps, seconds.
    pub dt: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            modes: 64 * 64,
            mode: Mode::Direct,
            damping: 0.05,
            display_scale: 1.0,
            dt: 1.0 / 60.0,
        }
    }
}

/// Requested parameter changes; kernel fields are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamUpdate {
    pub modes: Option<usize>,
    pub mode: Option<Mode>,
    pub damping: Option<f64>,
    pub display_scale: Option<f64>,
    pub dt: Option<f64>,
    pub sigma: Option<f64>,
    pub penalty: Option<f64>,
    pub lambda_in: Option<f64>,
    pub lambda_out: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionError {
    /// Kernel parameters are baked into the spectra.
    Immutable(&'static str),
    InvalidParam(String),
    Engine(String),
}

impl std::fmt::Display for SessionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SessionError::Immutable(what) => write!(
                f,
                "{what} is fixed by the precomputed spectra; run `geofield precompute` with the new value"
            ),
            SessionError::InvalidParam(s) | SessionError::Engine(s) => f.write_str(s),
        }
    }
}

impl std::error::Error for SessionError {}

impl From<Error> for SessionError {
    fn from(e: Error) -> Self {
        SessionError::Engine(e.to_string())
    }
}

impl From<geofield::error::EnergyError> for SessionError {
    fn from(e: geofield::error::EnergyError) -> Self {
        SessionError::Engine(e.to_string())
    }
}

/// Bounded ring of per-frame evaluation times.
#[derive(Debug, Clone)]
pub struct FrameStats {
    times_us: VecDeque<f64>,
    capacity: usize,
    frames: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub frames: u64,
    pub window: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl FrameStats {
    pub fn new(capacity: usize) -> Self {
        Self {
            times_us: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            frames: 0,
        }
    }

    pub fn push(&mut self, us: f64) {
        if self.times_us.len() == self.capacity {
            self.times_us.pop_front();
        }
        self.times_us.push_back(us);
        self.frames += 1;
    }

    pub fn len(&self) -> usize {
        self.times_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_us.is_empty()
    }

    pub fn summary(&self) -> StatsSummary {
        let mut v: Vec<f64> = self.times_us.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if v.is_empty() {
                0.0
            } else {
                v[((v.len() - 1) as f64 * p).round() as usize]
            }
        };
        StatsSummary {
            frames: self.frames,
            window: v.len(),
            p50_us: q(0.5),
            p95_us: q(0.95),
            p99_us: q(0.99),
            max_us: v.last().copied().unwrap_or(0.0),
        }
    }
}

pub const STATS_CAPACITY: usize = 4096;
pub const MAX_SLICE_SIDE: usize = 256;

/// Downsampled `Re score` over translations at one rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSlice {
    pub theta: f64,
    pub w: usize,
    pub h: usize,
    /// Translation of the first cell's lower-left node and the cell size.
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    /// Row-major (y outer) little-endian `f32`; masked cells are NaN.
    pub data_b64: String,
    pub full_mask: bool,
    /// Full-resolution landscape maximum, if any cell is unmasked.
    pub argmax: Option<[f64; 3]>,
    /// Slice cell holding the full-resolution maximum.
    pub argmax_cell: Option<[usize; 2]>,
    pub modes: usize,
}

impl FieldSlice {
    pub fn values(&self) -> Vec<f32> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&self.data_b64)
            .unwrap_or_default();
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

pub struct Session {
    pub id: u64,
    pub scene: Option<String>,
    fixed: Arc<PartAsset>,
    moving: Arc<PartAsset>,
    kernel: KernelSpec,
    evaluator: Arc<PairEvaluator>,
    params: Params,
    pose: Configuration,
    stats: FrameStats,
}

impl Session {
    pub fn new(
        id: u64,
        scene: Option<String>,
        fixed: Arc<PartAsset>,
        moving: Arc<PartAsset>,
        kernel: KernelSpec,
        start: Configuration,
        params: Params,
    ) -> Result<Self, SessionError> {
        if fixed.grid().dim() != 2 {
            return Err(SessionError::InvalidParam("sessions drive planar scenes only".into()));
        }
        let evaluator = Arc::new(PairEvaluator::new(&fixed, &moving, Some(params.modes), ModeSelection::Window)?);
        let mut s = Self {
            id,
            scene,
            fixed,
            moving,
            kernel,
            evaluator,
            params,
            pose: start,
            stats: FrameStats::new(STATS_CAPACITY),
        };
        // Warm the evaluation path once.
        s.evaluator.evaluate(&s.pose);
        s.stats = FrameStats::new(STATS_CAPACITY);
        Ok(s)
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn pose(&self) -> Configuration {
        self.pose
    }

    pub fn stats(&self) -> StatsSummary {
        self.stats.summary()
    }

    pub fn evaluator(&self) -> Arc<PairEvaluator> {
        Arc::clone(&self.evaluator)
    }

    pub fn spacing(&self) -> f64 {
        self.fixed.grid().spacing()
    }

    fn eval(&mut self) -> EnergyEval {
        let e = self.evaluator.evaluate(&self.pose);
        self.stats.push(e.eval_time_us);
        e
    }

    /// Sets the pose and evaluates there. In damped mode this is the release
    /// point for subsequent [`Session::step`] calls.
    pub fn set_pose(&mut self, pose: Configuration) -> EnergyEval {
        self.pose = pose.reorthonormalized();
        self.eval()
    }

    /// One damped frame: evaluates at the current pose, then moves along
    /// `(F / c) dt` with the translation step clamped to half a grid cell
    /// and the rotation step clamped to the matching arc at the part's reach.
    /// Returns the evaluation at the pose before the move.
    pub fn step(&mut self) -> EnergyEval {
        let e = self.eval();
        let h = self.spacing();
        let gain = self.params.dt / self.params.damping;
        let mut dx = Vector3::from(e.force) * gain;
        if dx.norm() > 0.5 * h {
            dx *= 0.5 * h / dx.norm();
        }
        let reach = self.moving.bbox.diagonal().max(h);
        let max_turn = 0.5 * h / reach;
        let turn = (e.torque[2] * gain / (reach * reach)).clamp(-max_turn, max_turn);
        let next = Configuration {
            rotation: planar_rotation(turn) * self.pose.rotation,
            translation: self.pose.translation + dx,
        };
        self.pose = next.reorthonormalized();
        e
    }

    pub fn set_params(&mut self, u: &ParamUpdate) -> Result<Params, SessionError> {
        if u.sigma.is_some() {
            return Err(SessionError::Immutable("sigma"));
        }
        if u.penalty.is_some() || u.lambda_in.is_some() || u.lambda_out.is_some() {
            return Err(SessionError::Immutable("lambda"));
        }
        let mut p = self.params;
        if let Some(d) = u.damping {
            if !(d > 0.0 && d.is_finite()) {
                return Err(SessionError::InvalidParam(format!("damping must be positive, got {d}")));
            }
            p.damping = d;
        }
        if let Some(dt) = u.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(SessionError::InvalidParam(format!("dt must be positive, got {dt}")));
            }
            p.dt = dt;
        }
        if let Some(s) = u.display_scale {
            if !s.is_finite() {
                return Err(SessionError::InvalidParam("display scale must be finite".into()));
            }
            p.display_scale = s;
        }
        if let Some(m) = u.mode {
            p.mode = m;
        }
        let mut evaluator = None;
        if let Some(m) = u.modes {
            let nodes = self.fixed.grid().node_count();
            if m == 0 || m > nodes {
                return Err(SessionError::InvalidParam(format!("modes {m} outside 1..={nodes}")));
            }
            let ev = PairEvaluator::new(&self.fixed, &self.moving, Some(m), ModeSelection::Window)
                .map_err(|e| SessionError::InvalidParam(e.to_string()))?;
            p.modes = m;
            evaluator = Some(Arc::new(ev));
        }
        if let Some(ev) = evaluator {
            self.evaluator = ev;
        }
        self.params = p;
        Ok(p)
    }

    /// Landscape slice at rotation `theta`, optionally with a different `m'`.
    pub fn field_slice(&self, theta: f64, modes: Option<usize>, max_side: usize) -> Result<FieldSlice, SessionError> {
        let ev = match modes {
            Some(m) if m != self.params.modes => {
                Arc::new(PairEvaluator::new(&self.fixed, &self.moving, Some(m), ModeSelection::Window)?)
            }
            _ => self.evaluator(),
        };
        field_slice(&ev, theta, max_side)
    }
}

/// Max-pools the landscape into at most `max_side` cells per axis; a cell is
/// masked only when every translation in it is.
pub fn field_slice(ev: &PairEvaluator, theta: f64, max_side: usize) -> Result<FieldSlice, SessionError> {
    let sf = ev.score_field(&planar_rotation(theta))?;
    let g = sf.field.grid;
    let [nx, ny, _] = g.dims();
    let side = max_side.max(1);
    let fx = nx.div_ceil(side);
    let fy = ny.div_ceil(side);
    let (w, h) = (nx / fx, ny / fy);
    let mut data = vec![f32::NAN; w * h];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = g.index([ix, iy, 0]);
            if sf.wrapped[i] {
                continue;
            }
            let c = (ix / fx).min(w - 1) + w * (iy / fy).min(h - 1);
            let v = sf.field.values[i].re as f32;
            if data[c].is_nan() || v > data[c] {
                data[c] = v;
            }
        }
    }
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let argmax = landscape_argmax(&sf);
    let origin = g.origin();
    Ok(FieldSlice {
        theta,
        w,
        h,
        x0: origin.x,
        y0: origin.y,
        cell: g.spacing() * fx as f64,
        data_b64: base64::engine::general_purpose::STANDARD.encode(bytes),
        full_mask: sf.all_wrapped(),
        argmax_cell: argmax.as_ref().map(|a| [(a.cell[0] / fx).min(w - 1), (a.cell[1] / fy).min(h - 1)]),
        argmax: argmax.map(|a| a.translation),
        modes: sf.modes_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_buffer_is_bounded() {
        let mut s = FrameStats::new(4);
        for i in 0..10 {
            s.push(i as f64);
        }
        assert_eq!(s.len(), 4);
        let sum = s.summary();
        assert_eq!(sum.frames, 10);
        assert_eq!(sum.max_us, 9.0);
        assert_eq!(sum.p50_us, 8.0);
        assert_eq!(FrameStats::new(3).summary().p99_us, 0.0);
    }

    #[test]
    fn immutable_errors_name_precompute() {
        let msg = SessionError::Immutable("sigma").to_string();
        assert!(msg.contains("precompute"), "{msg}");
    }
}
