//! JSON text frames exchanged over the WebSocket, tagged by `"t"`.

use serde::{Deserialize, Serialize};

use geofield::energy::{Configuration, EnergyEval};
use geofield::scenes::SceneInfo;

use crate::session::{FieldSlice, ParamUpdate, Params, StatsSummary};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        v: u32,
    },
    /// A built-in scene by id, or `fixed`/`moving` parts of a manifest.
    LoadScene {
        #[serde(default)]
        scene: Option<String>,
        #[serde(default)]
        manifest: Option<String>,
        #[serde(default)]
        fixed: Option<String>,
        #[serde(default)]
        moving: Option<String>,
    },
    SetParams(ParamUpdate),
    Pose {
        theta: f64,
        x: f64,
        y: f64,
    },
    /// Advances damped mode by `frames` steps (default 1) and replies with
    /// the last evaluation.
    Step {
        #[serde(default)]
        frames: Option<usize>,
    },
    FieldSlice {
        theta: f64,
        #[serde(default)]
        modes: Option<usize>,
        #[serde(default)]
        max_side: Option<usize>,
    },
    Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMessage {
    pub score_re: f64,
    pub score_im: f64,
    pub energy: f64,
    pub fx: f64,
    pub fy: f64,
    /// Torque about the out-of-plane axis.
    pub torque: f64,
    /// Server compute time of the evaluation, microseconds.
    pub us: f64,
    pub modes: usize,
    pub wrapped: bool,
    /// Pose the evaluation refers to.
    pub theta: f64,
    pub x: f64,
    pub y: f64,
}

impl EvalMessage {
    pub fn new(e: &EnergyEval, pose: &Configuration) -> Self {
        Self {
            score_re: e.score.re,
            score_im: e.score.im,
            energy: e.energy,
            fx: e.force[0],
            fy: e.force[1],
            torque: e.torque[2],
            us: e.eval_time_us,
            modes: e.modes_used,
            wrapped: e.wrapped,
            theta: pose.theta(),
            x: pose.translation.x,
            y: pose.translation.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loaded {
    pub session: u64,
    pub scene: Option<String>,
    pub grid: [usize; 2],
    pub spacing: f64,
    pub sigma: f64,
    pub penalty: f64,
    pub params: Params,
    pub eval: EvalMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello { v: u32, scenes: Vec<SceneInfoOwned> },
    Loaded(Loaded),
    Ack { what: String, params: Params },
    Eval(EvalMessage),
    FieldSlice(FieldSlice),
    Stats(StatsSummary),
    Error { message: String },
}

/// Owned copy of [`SceneInfo`] for deserializing replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfoOwned {
    pub id: String,
    pub description: String,
    pub dimension: usize,
}

impl From<SceneInfo> for SceneInfoOwned {
    fn from(s: SceneInfo) -> Self {
        Self {
            id: s.id.into(),
            description: s.description.into(),
            dimension: s.dimension,
        }
    }
}

impl ServerMessage {
    pub fn error(message: impl std::fmt::Display) -> Self {
        ServerMessage::Error {
            message: message.to_string(),
        }
    }
}
