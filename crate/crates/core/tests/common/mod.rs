#![allow(dead_code)]

use statichedge::fixture;
use statichedge::instruments::{Instrument, InstrumentKind, Quote, QuoteBook};
use statichedge::scenarios::{build_grid_with, GridSpec, ScenarioGrid};

/// Cash plus the fixture options at `strikes`, with every quote depth set to
/// `depth` units (`None` for unlimited).
pub fn small_book(strikes: &[(char, f64)], depth: Option<f64>) -> QuoteBook {
    let full = fixture::book();
    let mut instruments = vec![full.instruments()[0].clone()];
    let mut quotes = vec![Quote::cash()];
    for (tag, k) in strikes {
        let kind = if *tag == 'C' {
            InstrumentKind::Call { strike: *k }
        } else {
            InstrumentKind::Put { strike: *k }
        };
        let i = full.find_option(&kind).expect("strike on the fixture ladder");
        let q = &full.quotes()[i];
        instruments.push(Instrument::new(full.instruments()[i].id.clone(), kind).unwrap());
        quotes.push(Quote::new(q.instrument_id.clone(), q.bid_price, q.ask_price, depth, depth).unwrap());
    }
    QuoteBook::new(instruments, quotes, full.spot(), full.maturity()).unwrap()
}

/// A coarse grid on the hedging interval, cheap enough for property tests.
pub fn coarse_grid() -> ScenarioGrid {
    let spec = GridSpec { panels: 12, nodes_per_panel: 8, ..fixture::grid_spec() };
    build_grid_with(&fixture::view(), &spec).unwrap()
}

pub fn fixture_grid() -> ScenarioGrid {
    build_grid_with(&fixture::view(), &fixture::grid_spec()).unwrap()
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// The fixture market trimmed to five strikes around spot.
pub fn trimmed_book() -> QuoteBook {
    let params = fixture::FixtureParams {
        strikes: vec![1950.0, 2000.0, 2050.0, 2100.0, 2150.0],
        ..Default::default()
    };
    fixture::book_with(&params, &fixture::market_config()).unwrap()
}
