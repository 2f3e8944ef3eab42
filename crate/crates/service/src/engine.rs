//! The one code path behind both the CLI and the HTTP handlers.

use statichedge::bounds;
use statichedge::instruments::{InstrumentKind, QuoteBook};
use statichedge::pricing::{self, PricingOptions};
use statichedge::scenarios::{build_grid_with, ScenarioGrid, ViewModel};
use statichedge::solver::{self, Preferences, SplitPortfolio};
use statichedge::sweeps::{self, SweepContext, SweepSpec};
use statichedge::{Error, Result};

use crate::api::*;
use crate::config::{validate_tolerances, SessionConfig};

/// Largest Monte Carlo sample a single request may ask for.
pub const MAX_SAMPLES: usize = 5_000_000;

/// A validated session with its quote book loaded.
#[derive(Debug, Clone)]
pub struct Engine {
    config: SessionConfig,
    book: QuoteBook,
    ids: Vec<String>,
}

impl Engine {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let book = config.load_book()?;
        Ok(Self::with_book(config, book))
    }

    /// Uses `book` in place of the configured quote file.
    pub fn with_book(config: SessionConfig, book: QuoteBook) -> Self {
        let ids = book.instruments().iter().map(|i| i.id.clone()).collect();
        Self { config, book, ids }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn book(&self) -> &QuoteBook {
        &self.book
    }

    fn setting(&self, o: &Overrides) -> Result<(ViewModel, Preferences, ScenarioGrid)> {
        let mut view = self.config.view;
        view.mu = o.mu.unwrap_or(view.mu);
        view.sigma = o.sigma.unwrap_or(view.sigma);
        view.nu = o.nu.unwrap_or(view.nu);
        view.validate()?;
        let base = self.config.prefs;
        let lambda = o.lambda.unwrap_or(base.risk_aversion);
        let prefs = match o.wealth {
            Some(w) => Preferences::new(w, lambda)?,
            None => Preferences { risk_aversion: lambda, ..base },
        };
        prefs.validate()?;
        let grid = build_grid_with(&view, &self.config.grid)?;
        Ok((view, prefs, grid))
    }

    fn solver_tol(&self, requested: Option<f64>) -> Result<f64> {
        let options = PricingOptions {
            solver_tol: requested.unwrap_or(self.config.pricing.solver_tol),
            ..self.config.pricing
        };
        validate_tolerances(&options)?;
        Ok(options.solver_tol)
    }

    pub fn market(&self) -> MarketSummary {
        let book = &self.book;
        let rates = book.rates();
        let instruments: Vec<InstrumentRow> = book
            .iter()
            .map(|(i, q)| {
                let (kind, strike, bid, ask) = match &i.kind {
                    InstrumentKind::Cash(_) => ("cash", None, q.bid_price, q.ask_price),
                    InstrumentKind::Forward { ask, bid } => ("forward", None, *bid, *ask),
                    InstrumentKind::Call { strike } => ("call", Some(*strike), q.bid_price, q.ask_price),
                    InstrumentKind::Put { strike } => ("put", Some(*strike), q.bid_price, q.ask_price),
                };
                InstrumentRow {
                    id: i.id.clone(),
                    kind: kind.into(),
                    strike,
                    bid,
                    ask,
                    bid_depth: q.bid_depth,
                    ask_depth: q.ask_depth,
                }
            })
            .collect();
        let options: Vec<_> = book.iter().filter(|(i, _)| i.is_option()).map(|(_, q)| q).collect();
        let stats = |values: Vec<f64>| {
            (!values.is_empty()).then(|| SpreadStats {
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                mean: values.iter().sum::<f64>() / values.len() as f64,
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        };
        let strikes = book.strikes();
        MarketSummary {
            spot: book.spot(),
            maturity_years: book.maturity(),
            lend_rate: rates.lend_rate,
            borrow_rate: rates.borrow_rate,
            instrument_count: book.len(),
            option_count: options.len(),
            strike_range: strikes.first().zip(strikes.last()).map(|(a, b)| (*a, *b)),
            option_spread: stats(options.iter().map(|q| q.spread()).collect()),
            option_relative_spread: stats(
                options.iter().filter(|q| q.mid() > 0.0).map(|q| q.spread() / q.mid()).collect(),
            ),
            instruments,
        }
    }

    pub fn solve(&self, req: &SolveRequest) -> Result<SolveResponse> {
        let (_, prefs, grid) = self.setting(&req.overrides)?;
        let tol = self.solver_tol(req.solver_tol)?;
        let problem = solver::assemble(&self.book, &grid, &prefs, &req.liability)?;
        let r = solver::solve(&problem, tol)?;
        Ok(SolveResponse {
            portfolio: position_rows(&self.ids, &r.portfolio),
            instrument_ids: self.ids.clone(),
            net_units: r.portfolio.net(),
            cost: r.portfolio.cost(&self.book),
            objective: r.objective,
            entropic_risk: r.entropic_risk,
            budget_slack: r.budget_slack,
            budget_multiplier: r.budget_multiplier,
            kkt_residual: r.kkt_residual,
            duality_gap: r.duality_gap,
            iterations: r.iterations,
            status: r.status,
            solver_tol: tol,
        })
    }

    pub fn price(&self, req: &PriceRequest) -> Result<PriceResponse> {
        let (_, prefs, grid) = self.setting(&req.overrides)?;
        let options = PricingOptions {
            price_tol: req.price_tol.or(self.config.pricing.price_tol),
            solver_tol: self.solver_tol(req.solver_tol)?,
            exclude_from_hedging: req.exclude_from_hedging,
            interval: self.config.pricing.interval,
        };
        validate_tolerances(&options)?;
        let hedging = pricing::hedging_book(&self.book, &req.claim, &options)?;
        let excluded_instrument = self
            .ids
            .iter()
            .find(|id| hedging.index_of(id).is_none())
            .cloned();
        let r = pricing::price(&hedging, &grid, &prefs, &req.baseline, &req.claim, &options)?;
        let ids = &r.instrument_ids;
        Ok(PriceResponse {
            sell_price: r.sell_price,
            buy_price: r.buy_price,
            superhedge_cost: r.superhedge_cost,
            subhedge_cost: r.subhedge_cost,
            hedge_sell: position_rows(ids, &r.hedge_sell),
            hedge_buy: position_rows(ids, &r.hedge_buy),
            baseline_portfolio: position_rows(ids, &r.baseline_portfolio),
            baseline_entropic_risk: r.baseline_entropic_risk,
            bracket_sell: r.bracket_sell,
            bracket_buy: r.bracket_buy,
            excluded_instrument,
            iterations: r.iterations,
            max_kkt_residual: r.max_kkt_residual,
            price_tol: r.price_tol,
            solver_tol: r.solver_tol,
        })
    }

    pub fn bounds(&self, req: &BoundsRequest) -> Result<BoundsResponse> {
        let interval = req.interval.unwrap_or(self.config.pricing.interval);
        let sup = bounds::superhedge(&self.book, &req.claim, interval)?;
        let sub = bounds::subhedge(&self.book, &req.claim, interval)?;
        if sub.cost > sup.cost + 1e-9 * (1.0 + sup.cost.abs()) {
            return Err(Error::Unpriceable(format!(
                "subhedge cost {} exceeds superhedge cost {}; the quotes admit arbitrage",
                sub.cost, sup.cost
            )));
        }
        Ok(BoundsResponse {
            superhedge: BoundSide::new(&self.ids, &sup),
            subhedge: BoundSide::new(&self.ids, &sub),
            interval,
        })
    }

    pub fn sweep_context(&self) -> SweepContext {
        SweepContext {
            book: self.book.clone(),
            view: self.config.view,
            grid: self.config.grid,
            prefs: self.config.prefs,
            baseline: Default::default(),
            options: self.config.pricing,
        }
    }

    pub fn sweep(&self, spec: &SweepSpec) -> Result<SweepResponse> {
        let result = sweeps::run_sweep(&self.sweep_context(), spec)?;
        let mut csv = Vec::new();
        sweeps::write_csv(&result, &mut csv)?;
        Ok(SweepResponse {
            parameter_names: result.parameter_names,
            rows: result.rows,
            metadata: result.metadata,
            csv: String::from_utf8(csv).map_err(|e| Error::Io(e.to_string()))?,
        })
    }

    pub fn distribution(&self, req: &DistributionRequest) -> Result<DistributionResponse> {
        if req.n > MAX_SAMPLES {
            return Err(Error::Validation(format!("at most {MAX_SAMPLES} samples per request")));
        }
        let (view, prefs, grid) = self.setting(&req.overrides)?;
        let portfolio = match &req.portfolio {
            Some(rows) => {
                let mut net = vec![0.0; self.book.len()];
                for row in rows {
                    let i = self.book.index_of(&row.instrument).ok_or_else(|| {
                        Error::Validation(format!("unknown instrument `{}`", row.instrument))
                    })?;
                    if !row.units.is_finite() {
                        return Err(Error::Validation(format!("units of `{}` not finite", row.instrument)));
                    }
                    net[i] += row.units;
                }
                SplitPortfolio::from_net(&net)
            }
            None => {
                let problem = solver::assemble(&self.book, &grid, &prefs, &req.liability)?;
                solver::solve(&problem, self.config.pricing.solver_tol)?.portfolio
            }
        };
        let seed = req.seed.unwrap_or(self.config.seed);
        let distribution = sweeps::payoff_distribution(
            &self.book,
            &portfolio,
            &req.liability,
            &view,
            req.n,
            seed,
            req.bins,
            req.include_samples,
        )?;
        Ok(DistributionResponse {
            portfolio: position_rows(&self.ids, &portfolio),
            seed,
            distribution,
        })
    }
}
