#![allow(dead_code)]

use std::path::PathBuf;

use statichedge::fixture;
use statichedge::scenarios::GridSpec;
use statichedge_service::{Engine, SessionConfig};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn coarse_grid() -> GridSpec {
    GridSpec { panels: 12, nodes_per_panel: 8, ..fixture::grid_spec() }
}

/// Session on the bundled three-quote book with a coarse grid.
pub fn mini_config() -> SessionConfig {
    SessionConfig {
        quote_file: Some(data_path("table2.csv")),
        grid: coarse_grid(),
        ..SessionConfig::default()
    }
}

pub fn mini_engine() -> Engine {
    Engine::new(mini_config()).unwrap()
}

pub fn fixture_engine() -> Engine {
    Engine::new(SessionConfig::default()).unwrap()
}
