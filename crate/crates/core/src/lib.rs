//! Multi-agent debate engine for yes/no object-existence probes on images,
//! with a benchmark harness and a cause classifier for the errors that remain.

pub mod bench;
pub mod cli;
pub mod clock;
pub mod gateway;
pub mod inquiry;
pub mod interpret;
pub mod persona;
pub mod propagation;
pub mod protocol;
pub mod runner;

pub use protocol::{Answer, DebateConfig, DebateOutcome, Mode, ProbeItem, Role};
pub use runner::Engine;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
