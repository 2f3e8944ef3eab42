//! Writes the synthetic quote book to standard output as quote CSV.
//!
//! `cargo run -p statichedge-core --example write_fixture > data/fixture_quotes.csv`

use statichedge::fixture;
use statichedge::instruments::write_quote_csv;

fn main() -> statichedge::Result<()> {
    write_quote_csv(&fixture::book(), &fixture::market_config(), std::io::stdout().lock())
}
