//! Session server for the interactive sandbox: per-connection sessions over
//! a WebSocket JSON protocol, the scene list and static files over HTTP.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ServerMessage, PROTOCOL_VERSION};
pub use server::{router, serve, AppState, Connection, ServeConfig};
pub use session::{FieldSlice, Mode, ParamUpdate, Params, Session, SessionError};
