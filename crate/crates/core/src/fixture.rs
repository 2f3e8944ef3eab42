//! Synthetic market used by tests, examples and the bundled data files.
//!
//! Option mids come from Black–Scholes at a rate strictly between the lending
//! and borrowing rates, so neither cash leg can be replicated for free by a
//! put-call parity package. Bid and ask sit a fixed fraction around the mid.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use crate::instruments::{Instrument, InstrumentKind, MarketConfig, Quote, QuoteBook};
use crate::scenarios::{GridSpec, ViewModel};
use crate::solver::Preferences;

/// Interval on which claims are hedged and the fixture grid is supported.
pub const HEDGE_INTERVAL: (f64, f64) = (100.0, 5000.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub strikes: Vec<f64>,
    pub volatility: f64,
    /// Rate used for option mids and the forward level.
    pub rate: f64,
    /// Full bid-ask spread as a fraction of the mid.
    pub spread: f64,
    /// Full bid-ask spread of the forward, in index points.
    pub forward_spread: f64,
    pub depth_lots: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            strikes: (0..41).map(|i| 1850.0 + 10.0 * i as f64).collect(),
            volatility: 0.1478,
            rate: 0.01,
            spread: 0.01,
            forward_spread: 0.25,
            depth_lots: 100.0,
        }
    }
}

pub fn market_config() -> MarketConfig {
    MarketConfig {
        spot: 2056.32,
        maturity_years: 0.19,
        lend_rate: 0.0043,
        borrow_rate: 0.03,
        lot_forward: 50.0,
        lot_option: 100.0,
    }
}

/// Student-t view on the log-return.
pub fn view() -> ViewModel {
    ViewModel {
        mu: 0.0,
        sigma: 0.0554,
        nu: 4.8355,
        spot: market_config().spot,
    }
}

pub fn preferences() -> Preferences {
    Preferences {
        wealth: 100_000.0,
        risk_aversion: 2.0,
        scale_wealth: 100_000.0,
    }
}

/// Default grid clamped to the hedging interval.
pub fn grid_spec() -> GridSpec {
    GridSpec::default().with_support(HEDGE_INTERVAL.0, HEDGE_INTERVAL.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionType {
    Call,
    Put,
}

/// Black–Scholes price of a European option.
pub fn black_scholes(kind: OptionType, spot: f64, strike: f64, rate: f64, vol: f64, t: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let sd = vol * t.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * t) / sd;
    let d2 = d1 - sd;
    let df = (-rate * t).exp();
    match kind {
        OptionType::Call => spot * n.cdf(d1) - strike * df * n.cdf(d2),
        OptionType::Put => strike * df * n.cdf(-d2) - spot * n.cdf(-d1),
    }
}

/// Book of cash, one forward and a call and a put at every strike.
pub fn book_with(params: &FixtureParams, config: &MarketConfig) -> Result<QuoteBook> {
    config.validate()?;
    let (spot, t) = (config.spot, config.maturity_years);
    let fwd = spot * (params.rate * t).exp();
    let half = 0.5 * params.forward_spread;
    let fwd_depth = params.depth_lots * config.lot_forward;
    let opt_depth = params.depth_lots * config.lot_option;

    let mut instruments = vec![Instrument::cash(config.rates()?)];
    let mut quotes = vec![Quote::cash()];
    instruments.push(Instrument::new(
        "FWD",
        InstrumentKind::Forward { ask: fwd + half, bid: fwd - half },
    )?);
    quotes.push(Quote::new("FWD", 0.0, 0.0, Some(fwd_depth), Some(fwd_depth))?);
    for &strike in &params.strikes {
        for (kind, tag) in [(OptionType::Call, "C"), (OptionType::Put, "P")] {
            let id = format!("{tag}{strike}");
            let mid = black_scholes(kind, spot, strike, params.rate, params.volatility, t);
            let instrument_kind = match kind {
                OptionType::Call => InstrumentKind::Call { strike },
                OptionType::Put => InstrumentKind::Put { strike },
            };
            instruments.push(Instrument::new(id.clone(), instrument_kind)?);
            quotes.push(Quote::new(
                id,
                mid * (1.0 - 0.5 * params.spread),
                mid * (1.0 + 0.5 * params.spread),
                Some(opt_depth),
                Some(opt_depth),
            )?);
        }
    }
    QuoteBook::new(instruments, quotes, spot, t)
}

/// The default synthetic book.
pub fn book() -> QuoteBook {
    book_with(&FixtureParams::default(), &market_config()).expect("fixture parameters are valid")
}

/// Wide strike ladder for replication checks over the whole hedging interval.
pub fn wide_strikes() -> Vec<f64> {
    let mut strikes: Vec<f64> = (1..=9).map(|i| 100.0 * i as f64).collect();
    strikes.extend((0..=60).map(|i| 1000.0 + 25.0 * i as f64));
    strikes.extend((0..=10).map(|i| 2600.0 + 240.0 * i as f64));
    strikes.push(HEDGE_INTERVAL.1);
    strikes.dedup();
    strikes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_call_parity() {
        let (s, k, r, v, t) = (2056.32, 2050.0, 0.01, 0.1478, 0.19);
        let c = black_scholes(OptionType::Call, s, k, r, v, t);
        let p = black_scholes(OptionType::Put, s, k, r, v, t);
        assert!((c - p - (s - k * (-r * t).exp())).abs() < 1e-9);
    }

    #[test]
    fn black_scholes_reference_value() {
        // S=100, K=100, r=5%, vol=20%, T=1
        let c = black_scholes(OptionType::Call, 100.0, 100.0, 0.05, 0.2, 1.0);
        assert!((c - 10.450583572185565).abs() < 1e-9);
    }

    #[test]
    fn default_book_shape() {
        let b = book();
        assert_eq!(b.len(), 84);
        let (_, ask, bid) = b.forward().unwrap();
        assert!((ask - bid - 0.25).abs() < 1e-9);
        for (i, q) in b.iter().skip(2) {
            assert!(i.is_option());
            assert!(q.bid_price > 0.0 && (q.spread() / q.mid() - 0.01).abs() < 1e-12);
            assert_eq!(q.ask_depth, Some(10_000.0));
        }
    }

    #[test]
    fn wide_strikes_cover_interval() {
        let k = wide_strikes();
        assert_eq!(k[0], 100.0);
        assert_eq!(*k.last().unwrap(), 5000.0);
        assert!(k.windows(2).all(|w| w[0] < w[1] && w[1] - w[0] <= 500.0));
    }
}
