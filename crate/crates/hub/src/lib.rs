//! Orchestration hub: display registry, session state, wire protocol,
//! polls, casting, personalization and render-state composition, plus the
//! scenario runner and simulated displays built on top of it.

pub mod compose;
pub mod config;
pub mod hub;
pub mod polls;
pub mod prefs;
pub mod protocol;
pub mod registry;
pub mod server;
pub mod session;
pub mod sim;
pub mod wizard;

pub use compose::RenderState;
pub use config::EngineConfig;
pub use hub::Hub;
pub use protocol::{Addressed, Message, To};
pub use session::{HubError, Session};
