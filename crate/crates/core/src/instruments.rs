//! Tradable assets, their bid/ask quotes and quote books.
//!
//! Every instrument pays at the common maturity `T` a function of the
//! underlying level `X_T`. Positions are split into a nonnegative long part
//! and a nonnegative short part so that both the payoff and the entry cost
//! become linear in each part:
//!
//! ```text
//! payoff(x) = p_long(X_T) * x_long + p_short(X_T) * x_short
//! cost(x)   = ask * x_long - bid * x_short
//! ```
//!
//! Depths are held in units. Lot multipliers are applied once, when a quote
//! file is read.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier given to the synthesized cash instrument.
pub const CASH_ID: &str = "CASH";

/// Borrowing and lending rates, continuously compounded and annualized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub borrow_rate: f64,
    pub lend_rate: f64,
}

impl RatePair {
    pub fn new(borrow_rate: f64, lend_rate: f64) -> Result<Self> {
        if !borrow_rate.is_finite() || !lend_rate.is_finite() {
            return Err(Error::Validation("rates must be finite".into()));
        }
        if borrow_rate < lend_rate {
            return Err(Error::Validation(format!(
                "borrow rate {borrow_rate} below lend rate {lend_rate}"
            )));
        }
        Ok(Self {
            borrow_rate,
            lend_rate,
        })
    }

    /// Growth factor of one unit of cash lent until `t`.
    pub fn lend_growth(&self, t: f64) -> f64 {
        (self.lend_rate * t).exp()
    }

    /// Amount owed at `t` per unit of cash borrowed.
    pub fn borrow_growth(&self, t: f64) -> f64 {
        (self.borrow_rate * t).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InstrumentKind {
    Cash(RatePair),
    /// Forward prices for entering a long (`ask`) or short (`bid`) position.
    Forward { ask: f64, bid: f64 },
    Call { strike: f64 },
    Put { strike: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub id: String,
    pub kind: InstrumentKind,
}

impl Instrument {
    pub fn new(id: impl Into<String>, kind: InstrumentKind) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::Validation("empty instrument id".into()));
        }
        match kind {
            InstrumentKind::Forward { ask, bid } => {
                if !(ask.is_finite() && bid.is_finite()) || ask < bid {
                    return Err(Error::Validation(format!(
                        "{id}: forward ask {ask} below bid {bid}"
                    )));
                }
            }
            InstrumentKind::Call { strike } | InstrumentKind::Put { strike } => {
                if !(strike.is_finite() && strike > 0.0) {
                    return Err(Error::Validation(format!(
                        "{id}: strike must be positive, got {strike}"
                    )));
                }
            }
            InstrumentKind::Cash(_) => {}
        }
        Ok(Self { id, kind })
    }

    pub fn cash(rates: RatePair) -> Self {
        Self {
            id: CASH_ID.to_string(),
            kind: InstrumentKind::Cash(rates),
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match self.kind {
            InstrumentKind::Call { strike } | InstrumentKind::Put { strike } => Some(strike),
            _ => None,
        }
    }

    pub fn is_option(&self) -> bool {
        self.strike().is_some()
    }

    /// Payoff of one unit held long.
    pub fn payoff_unit_long(&self, x_t: f64, t: f64) -> Result<f64> {
        check_domain(x_t, t)?;
        Ok(self.long_coefficient(x_t, t))
    }

    /// Payoff coefficient multiplying a nonnegative short quantity.
    pub fn payoff_unit_short(&self, x_t: f64, t: f64) -> Result<f64> {
        check_domain(x_t, t)?;
        Ok(self.short_coefficient(x_t, t))
    }

    /// Payoff of holding `units` (signed) at maturity.
    pub fn payoff(&self, units: f64, x_t: f64, t: f64) -> Result<f64> {
        check_domain(x_t, t)?;
        Ok(if units >= 0.0 {
            self.long_coefficient(x_t, t) * units
        } else {
            -self.short_coefficient(x_t, t) * units
        })
    }

    pub(crate) fn long_coefficient(&self, x_t: f64, t: f64) -> f64 {
        match &self.kind {
            InstrumentKind::Cash(rates) => rates.lend_growth(t),
            InstrumentKind::Forward { ask, .. } => x_t - ask,
            InstrumentKind::Call { strike } => (x_t - strike).max(0.0),
            InstrumentKind::Put { strike } => (strike - x_t).max(0.0),
        }
    }

    pub(crate) fn short_coefficient(&self, x_t: f64, t: f64) -> f64 {
        match &self.kind {
            InstrumentKind::Cash(rates) => -rates.borrow_growth(t),
            InstrumentKind::Forward { bid, .. } => -(x_t - bid),
            InstrumentKind::Call { .. } | InstrumentKind::Put { .. } => {
                -self.long_coefficient(x_t, t)
            }
        }
    }

    /// Points where the per-unit payoff changes slope.
    pub fn kinks(&self) -> Vec<f64> {
        self.strike().into_iter().collect()
    }
}

fn check_domain(x_t: f64, t: f64) -> Result<()> {
    if !(x_t.is_finite() && x_t > 0.0) {
        return Err(Error::Domain(format!("underlying level must be positive, got {x_t}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("maturity must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Best bid/ask for one instrument with the quantities available there.
///
/// A depth of `None` means the side is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub instrument_id: String,
    pub bid_price: f64,
    pub ask_price: f64,
    pub bid_depth: Option<f64>,
    pub ask_depth: Option<f64>,
}

impl Quote {
    pub fn new(
        instrument_id: impl Into<String>,
        bid_price: f64,
        ask_price: f64,
        bid_depth: Option<f64>,
        ask_depth: Option<f64>,
    ) -> Result<Self> {
        let quote = Self {
            instrument_id: instrument_id.into(),
            bid_price,
            ask_price,
            bid_depth,
            ask_depth,
        };
        quote.validate()?;
        Ok(quote)
    }

    pub fn cash() -> Self {
        Self {
            instrument_id: CASH_ID.to_string(),
            bid_price: 1.0,
            ask_price: 1.0,
            bid_depth: None,
            ask_depth: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let id = &self.instrument_id;
        if !(self.bid_price.is_finite() && self.ask_price.is_finite()) {
            return Err(Error::Validation(format!("{id}: non-finite price")));
        }
        if self.bid_price > self.ask_price {
            return Err(Error::Validation(format!(
                "{id}: crossed quote, bid {} above ask {}",
                self.bid_price, self.ask_price
            )));
        }
        for depth in [self.bid_depth, self.ask_depth].into_iter().flatten() {
            if !(depth >= 0.0) || depth.is_infinite() {
                return Err(Error::Validation(format!("{id}: invalid depth {depth}")));
            }
        }
        Ok(())
    }

    pub fn spread(&self) -> f64 {
        self.ask_price - self.bid_price
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.ask_price + self.bid_price)
    }

    /// Cost of entering `units` (signed): pay the ask when buying, receive the
    /// bid when selling.
    pub fn entry_cost(&self, units: f64) -> Result<f64> {
        let min = self.bid_depth.map_or(f64::NEG_INFINITY, |d| -d);
        let max = self.ask_depth.unwrap_or(f64::INFINITY);
        if !(units >= min && units <= max) {
            return Err(Error::DepthViolation { units, min, max });
        }
        Ok(self.cost_unchecked(units))
    }

    pub(crate) fn cost_unchecked(&self, units: f64) -> f64 {
        if units >= 0.0 {
            self.ask_price * units
        } else {
            self.bid_price * units
        }
    }
}

/// Market parameters that are not part of a quote file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub spot: f64,
    pub maturity_years: f64,
    pub lend_rate: f64,
    pub borrow_rate: f64,
    #[serde(default = "default_lot_forward")]
    pub lot_forward: f64,
    #[serde(default = "default_lot_option")]
    pub lot_option: f64,
}

fn default_lot_forward() -> f64 {
    50.0
}

fn default_lot_option() -> f64 {
    100.0
}

impl MarketConfig {
    pub fn rates(&self) -> Result<RatePair> {
        RatePair::new(self.borrow_rate, self.lend_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(Error::Validation(format!("spot must be positive, got {}", self.spot)));
        }
        if !(self.maturity_years.is_finite() && self.maturity_years > 0.0) {
            return Err(Error::Validation(format!(
                "maturity must be positive, got {}",
                self.maturity_years
            )));
        }
        for lot in [self.lot_forward, self.lot_option] {
            if !(lot.is_finite() && lot > 0.0) {
                return Err(Error::Validation(format!("lot size must be positive, got {lot}")));
            }
        }
        self.rates().map(|_| ())
    }

    /// Reads `key = value` lines (TOML syntax).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Validation(format!("market config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Snapshot of every tradable instrument at one instant.
///
/// Immutable once built; the constructors validate the book invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteBook {
    instruments: Vec<Instrument>,
    quotes: Vec<Quote>,
    spot: f64,
    maturity: f64,
}

impl QuoteBook {
    pub fn new(
        instruments: Vec<Instrument>,
        quotes: Vec<Quote>,
        spot: f64,
        maturity: f64,
    ) -> Result<Self> {
        let book = Self {
            instruments,
            quotes,
            spot,
            maturity,
        };
        book.validate()?;
        Ok(book)
    }

    fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(Error::Validation(format!("spot must be positive, got {}", self.spot)));
        }
        if !(self.maturity.is_finite() && self.maturity > 0.0) {
            return Err(Error::Validation(format!(
                "maturity must be positive, got {}",
                self.maturity
            )));
        }
        if self.instruments.len() != self.quotes.len() {
            return Err(Error::Validation(format!(
                "{} instruments but {} quotes",
                self.instruments.len(),
                self.quotes.len()
            )));
        }
        let mut ids = HashSet::new();
        for (instrument, quote) in self.instruments.iter().zip(&self.quotes) {
            if !ids.insert(instrument.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id {}", instrument.id)));
            }
            if quote.instrument_id != instrument.id {
                return Err(Error::Validation(format!(
                    "quote {} does not match instrument {}",
                    quote.instrument_id, instrument.id
                )));
            }
            quote.validate()?;
            match instrument.kind {
                InstrumentKind::Cash(_) => {
                    if quote.bid_price != 1.0 || quote.ask_price != 1.0 {
                        return Err(Error::Validation("cash must be quoted at 1".into()));
                    }
                }
                InstrumentKind::Forward { .. } => {
                    if quote.bid_price != 0.0 || quote.ask_price != 0.0 {
                        return Err(Error::Validation("forward entry cost must be 0".into()));
                    }
                }
                _ => {}
            }
        }
        let cash = self.count(|k| matches!(k, InstrumentKind::Cash(_)));
        if cash != 1 {
            return Err(Error::Validation(format!("expected one cash instrument, found {cash}")));
        }
        let forwards = self.count(|k| matches!(k, InstrumentKind::Forward { .. }));
        if forwards > 1 {
            return Err(Error::Validation(format!("at most one forward allowed, found {forwards}")));
        }
        Ok(())
    }

    fn count(&self, pred: impl Fn(&InstrumentKind) -> bool) -> usize {
        self.instruments.iter().filter(|i| pred(&i.kind)).count()
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn len(&self) -> usize {
        self.instruments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty()
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Instrument, &Quote)> {
        self.instruments.iter().zip(&self.quotes)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.instruments.iter().position(|i| i.id == id)
    }

    pub fn rates(&self) -> RatePair {
        self.instruments
            .iter()
            .find_map(|i| match i.kind {
                InstrumentKind::Cash(rates) => Some(rates),
                _ => None,
            })
            .expect("validated book holds a cash instrument")
    }

    pub fn forward(&self) -> Option<(&Instrument, f64, f64)> {
        self.instruments.iter().find_map(|i| match i.kind {
            InstrumentKind::Forward { ask, bid } => Some((i, ask, bid)),
            _ => None,
        })
    }

    /// Sorted, deduplicated option strikes.
    pub fn strikes(&self) -> Vec<f64> {
        let mut strikes: Vec<f64> = self.instruments.iter().filter_map(Instrument::strike).collect();
        strikes.sort_by(f64::total_cmp);
        strikes.dedup();
        strikes
    }

    /// Option quoted with exactly this kind and strike.
    pub fn find_option(&self, kind: &InstrumentKind) -> Option<usize> {
        self.instruments.iter().position(|i| &i.kind == kind)
    }

    /// Book with one instrument removed. Cash cannot be removed.
    pub fn without(&self, id: &str) -> Result<Self> {
        let idx = self
            .index_of(id)
            .ok_or_else(|| Error::Validation(format!("unknown instrument {id}")))?;
        if matches!(self.instruments[idx].kind, InstrumentKind::Cash(_)) {
            return Err(Error::Validation("cash cannot be removed".into()));
        }
        let mut book = self.clone();
        book.instruments.remove(idx);
        book.quotes.remove(idx);
        Ok(book)
    }

    /// Same prices with every depth removed.
    pub fn with_unlimited_depth(&self) -> Self {
        let mut book = self.clone();
        for quote in &mut book.quotes {
            quote.bid_depth = None;
            quote.ask_depth = None;
        }
        book
    }

    /// Depths multiplied by `factor`.
    pub fn with_depth_scale(&self, factor: f64) -> Self {
        let mut book = self.clone();
        for quote in &mut book.quotes {
            quote.bid_depth = quote.bid_depth.map(|d| d * factor);
            quote.ask_depth = quote.ask_depth.map(|d| d * factor);
        }
        book
    }

    /// Bid and ask collapsed to the mid (forward prices included).
    pub fn with_mid_prices(&self) -> Self {
        let mut book = self.clone();
        for (instrument, quote) in book.instruments.iter_mut().zip(&mut book.quotes) {
            let mid = quote.mid();
            quote.bid_price = mid;
            quote.ask_price = mid;
            if let InstrumentKind::Forward { ask, bid } = &mut instrument.kind {
                let m = 0.5 * (*ask + *bid);
                *ask = m;
                *bid = m;
            }
        }
        book
    }
}

const HEADER: [&str; 7] = ["ticker", "type", "strike", "bid_qty_lots", "bid", "ask", "ask_qty_lots"];

/// Reads a quote CSV and synthesizes the cash instrument from `config`.
pub fn load_quote_book(path: impl AsRef<Path>, config: &MarketConfig) -> Result<QuoteBook> {
    let file = std::fs::File::open(path)?;
    parse_quote_csv(file, config)
}

pub fn parse_quote_csv(reader: impl Read, config: &MarketConfig) -> Result<QuoteBook> {
    config.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }

    let mut instruments = vec![Instrument::cash(config.rates()?)];
    let mut quotes = vec![Quote::cash()];
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        let field = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize| -> Result<f64> {
            let raw = field(i);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("column `{}`: bad number `{raw}`", HEADER[i])))
        };

        let ticker = field(0).to_string();
        if ticker.is_empty() {
            return Err(parse_err("empty ticker".into()));
        }
        if ticker == CASH_ID || !seen.insert(ticker.clone()) {
            return Err(parse_err(format!("duplicate or reserved ticker `{ticker}`")));
        }
        let bid_lots = number(3)?;
        let bid = number(4)?;
        let ask = number(5)?;
        let ask_lots = number(6)?;
        if bid_lots < 0.0 || ask_lots < 0.0 {
            return Err(parse_err("negative quantity".into()));
        }
        if bid > ask {
            return Err(Error::Validation(format!(
                "line {line}: crossed quote for {ticker}, bid {bid} above ask {ask}"
            )));
        }
        let kind_name = field(1).to_ascii_lowercase();
        let (kind, lot) = match kind_name.as_str() {
            "forward" => {
                if !field(2).is_empty() {
                    return Err(parse_err("forward rows take no strike".into()));
                }
                (InstrumentKind::Forward { ask, bid }, config.lot_forward)
            }
            "call" => (InstrumentKind::Call { strike: number(2)? }, config.lot_option),
            "put" => (InstrumentKind::Put { strike: number(2)? }, config.lot_option),
            other => return Err(parse_err(format!("unknown instrument type `{other}`"))),
        };
        let (bid_price, ask_price) = match kind {
            InstrumentKind::Forward { .. } => (0.0, 0.0),
            _ => (bid, ask),
        };
        let instrument = Instrument::new(ticker.clone(), kind)
            .map_err(|e| parse_err(e.to_string()))?;
        instruments.push(instrument);
        quotes.push(Quote::new(
            ticker,
            bid_price,
            ask_price,
            Some(bid_lots * lot),
            Some(ask_lots * lot),
        )?);
    }
    if instruments
        .iter()
        .filter(|i| matches!(i.kind, InstrumentKind::Forward { .. }))
        .count()
        > 1
    {
        return Err(Error::Validation("at most one forward allowed".into()));
    }
    QuoteBook::new(instruments, quotes, config.spot, config.maturity_years)
}

/// Writes the non-cash rows of `book` back in the quote CSV format.
pub fn write_quote_csv(book: &QuoteBook, config: &MarketConfig, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(HEADER).map_err(io)?;
    for (instrument, quote) in book.iter() {
        let lots = |depth: Option<f64>, lot: f64| -> Result<String> {
            depth
                .map(|d| Num(d / lot).to_string())
                .ok_or_else(|| Error::Validation(format!("{}: unbounded depth", instrument.id)))
        };
        let row = match instrument.kind {
            InstrumentKind::Cash(_) => continue,
            InstrumentKind::Forward { ask, bid } => [
                instrument.id.clone(),
                "forward".into(),
                String::new(),
                lots(quote.bid_depth, config.lot_forward)?,
                Num(bid).to_string(),
                Num(ask).to_string(),
                lots(quote.ask_depth, config.lot_forward)?,
            ],
            InstrumentKind::Call { strike } | InstrumentKind::Put { strike } => [
                instrument.id.clone(),
                if matches!(instrument.kind, InstrumentKind::Call { .. }) { "call" } else { "put" }
                    .into(),
                Num(strike).to_string(),
                lots(quote.bid_depth, config.lot_option)?,
                Num(quote.bid_price).to_string(),
                Num(quote.ask_price).to_string(),
                lots(quote.ask_depth, config.lot_option)?,
            ],
        };
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Shortest round-trip decimal formatting.
pub(crate) struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
