//! Connection state machine and the axum router around it.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use nalgebra::Vector3;
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use geofield::assets::AssetManifest;
use geofield::descriptor::{IntegrationPolicy, KernelSpec};
use geofield::energy::{Configuration, PartAsset};
use geofield::scenes;

use crate::protocol::{ClientMessage, EvalMessage, Loaded, SceneInfoOwned, ServerMessage, PROTOCOL_VERSION};
use crate::session::{self, FieldSlice, Mode, Params, Session, SessionError, MAX_SLICE_SIDE};

/// Server-wide settings.
#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// Nodes per axis for built-in scenes.
    pub grid: usize,
    pub kernel: KernelSpec,
    pub policy: IntegrationPolicy,
    pub params: Params,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            grid: 256,
            kernel: KernelSpec::skeletal(0.5, 3.0),
            policy: IntegrationPolicy::default(),
            params: Params::default(),
            static_dir: None,
        }
    }
}

type Pair = Arc<(Arc<PartAsset>, Arc<PartAsset>)>;

pub struct AppState {
    pub config: ServeConfig,
    cache: Mutex<HashMap<String, Pair>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServeConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            cache: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    /// Assets of a built-in scene, computed once per server.
    pub fn scene_assets(&self, id: &str) -> Result<(scenes::Scene, Pair), SessionError> {
        let scene = scenes::builtin(id).ok_or_else(|| SessionError::InvalidParam(format!("unknown scene {id:?}")))?;
        let key = format!("scene:{id}");
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok((scene, Arc::clone(p)));
        }
        let a = scene.assets(self.config.grid, &self.config.kernel, &self.config.policy)?;
        let pair: Pair = Arc::new((Arc::new(a.fixed), Arc::new(a.moving)));
        self.cache.lock().expect("cache lock").insert(key, Arc::clone(&pair));
        Ok((scene, pair))
    }

    fn session_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }
}

/// Work the transport must run off the evaluation path.
pub enum Deferred {
    Slice(Box<dyn FnOnce() -> ServerMessage + Send>),
}

/// Per-connection protocol state.
pub struct Connection {
    state: Arc<AppState>,
    session: Option<Session>,
    /// Damped mode has a released pose to advance.
    released: bool,
}

impl Connection {
    pub fn new(state: Arc<AppState>) -> Self {
        Self {
            state,
            session: None,
            released: false,
        }
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    /// Whether the transport should keep calling [`Connection::tick`].
    pub fn wants_ticks(&self) -> bool {
        self.released && self.session.as_ref().is_some_and(|s| s.params().mode == Mode::Damped)
    }

    pub fn frame_interval(&self) -> Duration {
        let dt = self.session.as_ref().map_or(1.0 / 60.0, |s| s.params().dt);
        Duration::from_secs_f64(dt)
    }

    /// Handles a raw text frame.
    pub fn handle_text(&mut self, text: &str) -> (Vec<ServerMessage>, Option<Deferred>) {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(m) => self.handle(m),
            Err(e) => (vec![ServerMessage::error(format!("bad message: {e}"))], None),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> (Vec<ServerMessage>, Option<Deferred>) {
        match self.dispatch(msg) {
            Ok(r) => r,
            Err(e) => (vec![ServerMessage::error(e)], None),
        }
    }

    fn live(&mut self) -> Result<&mut Session, SessionError> {
        self.session
            .as_mut()
            .ok_or_else(|| SessionError::InvalidParam("no scene loaded; send load_scene first".into()))
    }

    fn dispatch(&mut self, msg: ClientMessage) -> Result<(Vec<ServerMessage>, Option<Deferred>), SessionError> {
        let reply = match msg {
            ClientMessage::Hello { v } => {
                if v != PROTOCOL_VERSION {
                    return Err(SessionError::InvalidParam(format!(
                        "protocol version {v} unsupported; server speaks {PROTOCOL_VERSION}"
                    )));
                }
                ServerMessage::Hello {
                    v: PROTOCOL_VERSION,
                    scenes: scenes::list().into_iter().map(SceneInfoOwned::from).collect(),
                }
            }
            ClientMessage::LoadScene {
                scene,
                manifest,
                fixed,
                moving,
            } => {
                let s = self.load(scene, manifest, fixed, moving)?;
                self.released = false;
                let pose = s.pose();
                let e = s.evaluator().evaluate(&pose);
                let loaded = ServerMessage::Loaded(Loaded {
                    session: s.id,
                    scene: s.scene.clone(),
                    grid: {
                        let d = s.evaluator().translation_grid().dims();
                        [d[0], d[1]]
                    },
                    spacing: s.spacing(),
                    sigma: s.kernel().sigma,
                    penalty: s.kernel().penalty(),
                    params: s.params(),
                    eval: EvalMessage::new(&e, &pose),
                });
                self.session = Some(s);
                loaded
            }
            ClientMessage::SetParams(u) => {
                let s = self.live()?;
                let params = s.set_params(&u)?;
                if params.mode == Mode::Direct {
                    self.released = false;
                }
                ServerMessage::Ack {
                    what: "set_params".into(),
                    params,
                }
            }
            ClientMessage::Pose { theta, x, y } => {
                if ![theta, x, y].iter().all(|v| v.is_finite()) {
                    return Err(SessionError::InvalidParam("pose values must be finite".into()));
                }
                let s = self.live()?;
                let pose = Configuration::planar(theta, x, y);
                let e = s.set_pose(pose);
                let msg = ServerMessage::Eval(EvalMessage::new(&e, &s.pose()));
                self.released = s.params().mode == Mode::Damped;
                msg
            }
            ClientMessage::Step { frames } => {
                let s = self.live()?;
                let mut last = None;
                for _ in 0..frames.unwrap_or(1).max(1) {
                    let before = s.pose();
                    last = Some(EvalMessage::new(&s.step(), &before));
                }
                ServerMessage::Eval(last.expect("at least one frame"))
            }
            ClientMessage::FieldSlice { theta, modes, max_side } => {
                let s = self.live()?;
                let side = max_side.unwrap_or(MAX_SLICE_SIDE).clamp(1, MAX_SLICE_SIDE);
                let ev = match modes {
                    Some(m) if m != s.params().modes => {
                        let slice = s.field_slice(theta, Some(m), side);
                        return Ok((vec![slice_reply(slice)], None));
                    }
                    _ => s.evaluator(),
                };
                let job = move || slice_reply(session::field_slice(&ev, theta, side));
                return Ok((Vec::new(), Some(Deferred::Slice(Box::new(job)))));
            }
            ClientMessage::Stats => ServerMessage::Stats(self.live()?.stats()),
        };
        Ok((vec![reply], None))
    }

    /// One damped frame; `None` once the pose has settled.
    pub fn tick(&mut self) -> Option<ServerMessage> {
        if !self.wants_ticks() {
            return None;
        }
        let s = self.session.as_mut()?;
        let before = s.pose();
        let e = s.step();
        let after = s.pose();
        let moved = (after.translation - before.translation).norm() + (after.theta() - before.theta()).abs();
        if moved < 1e-9 * s.spacing() {
            self.released = false;
        }
        Some(ServerMessage::Eval(EvalMessage::new(&e, &before)))
    }

    fn load(
        &self,
        scene: Option<String>,
        manifest: Option<String>,
        fixed: Option<String>,
        moving: Option<String>,
    ) -> Result<Session, SessionError> {
        let cfg = &self.state.config;
        let id = self.state.session_id();
        match (scene, manifest) {
            (Some(name), None) => {
                let (scene, pair) = self.state.scene_assets(&name)?;
                Session::new(
                    id,
                    Some(name),
                    Arc::clone(&pair.0),
                    Arc::clone(&pair.1),
                    cfg.kernel,
                    scene.start,
                    cfg.params,
                )
            }
            (None, Some(path)) => {
                let (m, dir) = AssetManifest::load(Path::new(&path))?;
                let fixed = fixed.unwrap_or_else(|| "fixed".into());
                let moving = moving.unwrap_or_else(|| "moving".into());
                let (a, b) = m.load_pair(&dir, &fixed, &moving)?;
                let kernel = m.part(&fixed)?.kernel;
                // Start with the moving part resting just above the fixed one.
                let lift = a.bbox.max.y - b.bbox.min.y + 2.0 * a.grid().spacing();
                let start = Configuration {
                    rotation: nalgebra::Matrix3::identity(),
                    translation: Vector3::new(0.0, lift, 0.0),
                };
                let mut params = cfg.params;
                params.modes = params.modes.min(a.grid().node_count());
                Session::new(id, m.scene.clone(), Arc::new(a), Arc::new(b), kernel, start, params)
            }
            _ => Err(SessionError::InvalidParam("load_scene needs exactly one of scene or manifest".into())),
        }
    }
}

fn slice_reply(r: Result<FieldSlice, SessionError>) -> ServerMessage {
    match r {
        Ok(s) => ServerMessage::FieldSlice(s),
        Err(e) => ServerMessage::error(e),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let app = Router::new()
        .route("/scenes", get(list_scenes))
        .route("/ws", get(ws_upgrade))
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(placeholder)),
    }
}

async fn list_scenes() -> Json<Vec<SceneInfoOwned>> {
    Json(scenes::list().into_iter().map(SceneInfoOwned::from).collect())
}

async fn placeholder() -> Html<&'static str> {
    Html(include_str!("../static/index.html"))
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| serve_socket(socket, state))
}

fn encode(m: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(m).expect("server messages serialize").into())
}

async fn serve_socket(socket: WebSocket, state: Arc<AppState>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<ServerMessage>();
    let writer = tokio::spawn(async move {
        while let Some(m) = rx.recv().await {
            if sink.send(encode(&m)).await.is_err() {
                break;
            }
        }
    });
    let mut conn = Connection::new(state);
    let mut ticker = tokio::time::interval(conn.frame_interval());
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            incoming = stream.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let was_ticking = conn.wants_ticks();
                // Loading a scene computes assets; keep it off the runtime threads.
                let (replies, deferred) = tokio::task::block_in_place(|| conn.handle_text(text.as_str()));
                for r in replies {
                    let _ = tx.send(r);
                }
                if let Some(Deferred::Slice(job)) = deferred {
                    let tx = tx.clone();
                    tokio::task::spawn_blocking(move || {
                        let _ = tx.send(job());
                    });
                }
                if conn.wants_ticks() && !was_ticking {
                    ticker = tokio::time::interval(conn.frame_interval());
                    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
                }
            }
            _ = ticker.tick(), if conn.wants_ticks() => {
                if let Some(m) = conn.tick() {
                    let _ = tx.send(m);
                }
            }
        }
    }
    drop(tx);
    let _ = writer.await;
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServeConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
