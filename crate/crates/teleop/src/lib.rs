//! Human tele-operation service: a fixed-rate simulation loop that applies the
//! latest client command, scores it with the training reward, streams frames
//! over a websocket and records demonstrations.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, Frame, Role, ServerMessage};
pub use server::{serve, ServeOptions};
pub use session::{SessionCore, SessionError};
