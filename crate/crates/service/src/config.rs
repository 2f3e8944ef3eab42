use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use statichedge::fixture;
use statichedge::instruments::{load_quote_book, MarketConfig, QuoteBook};
use statichedge::pricing::PricingOptions;
use statichedge::scenarios::{GridSpec, ViewModel};
use statichedge::solver::Preferences;
use statichedge::{Error, Result};

/// Everything a CLI run or a service process needs besides the request.
///
/// Without a quote file the bundled synthetic book is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub quote_file: Option<PathBuf>,
    pub market: MarketConfig,
    pub view: ViewModel,
    pub prefs: Preferences,
    pub grid: GridSpec,
    pub pricing: PricingOptions,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            quote_file: None,
            market: fixture::market_config(),
            view: fixture::view(),
            prefs: fixture::preferences(),
            grid: fixture::grid_spec(),
            pricing: PricingOptions::default(),
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(path) = &self.quote_file {
            if !path.is_file() {
                return Err(Error::Validation(format!("quote file {} not found", path.display())));
            }
        }
        self.market.validate()?;
        self.view.validate()?;
        if self.view.spot != self.market.spot {
            return Err(Error::Validation("view spot differs from market spot".into()));
        }
        self.prefs.validate()?;
        self.grid.validate()?;
        validate_tolerances(&self.pricing)
    }

    pub fn load_book(&self) -> Result<QuoteBook> {
        match &self.quote_file {
            Some(path) => load_quote_book(path, &self.market),
            None => fixture::book_with(&fixture::FixtureParams::default(), &self.market),
        }
    }
}

pub(crate) fn validate_tolerances(options: &PricingOptions) -> Result<()> {
    if let Some(t) = options.price_tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Validation(format!("price tolerance must be positive, got {t}")));
        }
    }
    let s = options.solver_tol;
    if !(s > 0.0 && s <= 1e-3) {
        return Err(Error::Validation(format!("solver tolerance must lie in (0, 1e-3], got {s}")));
    }
    let (lo, hi) = options.interval;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Validation(format!("bad hedging interval [{lo}, {hi}]")));
    }
    Ok(())
}
