//! CLI and JSON service around the statichedge engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod server;

pub use config::SessionConfig;
pub use engine::Engine;
