//! Claims and their prices.
//!
//! Indifference prices come from bisection on the optimum-value function:
//! the selling price of `c` is the least extra wealth `w` with
//! `phi(w_bar + w, c_bar + c) <= phi(w_bar, c_bar)`, and the buying price is
//! `-sell(-c)`. Values are compared through the entropic risk `log phi`,
//! which is monotone in `phi` and numerically tamer.

mod claims;
mod replication;

use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::fixture::HEDGE_INTERVAL;
use crate::instruments::{InstrumentKind, QuoteBook};
use crate::scenarios::ScenarioGrid;
use crate::solver::{self, Liability, Preferences, Problem, SolveResult, SplitPortfolio};

pub use claims::ClaimSpec;
pub use replication::{bl_replication, bl_replication_on, Replication};

const MAX_EXPANSIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricingOptions {
    /// Bisection stops once the bracket is this narrow. `None` selects
    /// `1e-4` times the claim scale on the hedging interval.
    pub price_tol: Option<f64>,
    pub solver_tol: f64,
    /// Remove a quoted option identical to the claim from the hedging set.
    pub exclude_from_hedging: bool,
    pub interval: (f64, f64),
}

impl Default for PricingOptions {
    fn default() -> Self {
        Self {
            price_tol: None,
            solver_tol: 1e-8,
            exclude_from_hedging: false,
            interval: HEDGE_INTERVAL,
        }
    }
}

impl PricingOptions {
    pub fn price_tol_for(&self, claim: &ClaimSpec) -> f64 {
        self.price_tol
            .unwrap_or_else(|| 1e-4 * claim.scale_on(self.interval.0, self.interval.1))
    }
}

/// One side of an indifference quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideResult {
    pub price: f64,
    /// Change of the optimal portfolio caused by the trade.
    pub hedge: SplitPortfolio,
    /// Final bisection bracket.
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// Largest KKT residual met among the solves of this side.
    pub max_kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub sell_price: f64,
    pub buy_price: f64,
    pub hedge_sell: SplitPortfolio,
    pub hedge_buy: SplitPortfolio,
    /// Ids of the hedging instruments, aligned with the hedge portfolios.
    pub instrument_ids: Vec<String>,
    /// Optimal expected loss before the trade.
    pub baseline_value: f64,
    pub baseline_entropic_risk: f64,
    pub baseline_portfolio: SplitPortfolio,
    pub iterations: usize,
    pub bracket_sell: (f64, f64),
    pub bracket_buy: (f64, f64),
    pub superhedge_cost: Option<f64>,
    pub subhedge_cost: Option<f64>,
    pub price_tol: f64,
    pub solver_tol: f64,
    pub max_kkt_residual: f64,
}

/// Optimal expected loss `phi(wealth, liability)`.
pub fn value_function(
    book: &QuoteBook,
    grid: &ScenarioGrid,
    prefs: &Preferences,
    liability: &Liability,
    wealth: f64,
) -> Result<f64> {
    let problem = solver::assemble(book, grid, prefs, liability)?.with_wealth(wealth);
    Ok(solver::solve(&problem, 1e-8)?.objective)
}

/// Market, view, preferences and baseline position with the baseline
/// optimum solved once and reused for every price.
#[derive(Debug, Clone)]
pub struct Pricer {
    book: QuoteBook,
    problem: Problem,
    baseline: Liability,
    baseline_result: SolveResult,
    wealth: f64,
    solver_tol: f64,
}

impl Pricer {
    pub fn new(
        book: &QuoteBook,
        grid: &ScenarioGrid,
        prefs: &Preferences,
        baseline: &Liability,
        solver_tol: f64,
    ) -> Result<Self> {
        let problem = solver::assemble(book, grid, prefs, baseline)?;
        let baseline_result = solver::solve(&problem, solver_tol)?;
        Ok(Self {
            book: book.clone(),
            problem,
            baseline: baseline.clone(),
            baseline_result,
            wealth: prefs.wealth,
            solver_tol,
        })
    }

    pub fn book(&self) -> &QuoteBook {
        &self.book
    }

    pub fn baseline(&self) -> &SolveResult {
        &self.baseline_result
    }

    /// Optimum after adding `claim` to the baseline liability and `extra`
    /// to the wealth.
    pub fn solve_with(&self, claim: &ClaimSpec, extra: f64) -> Result<SolveResult> {
        let problem = self
            .problem
            .with_liability(&self.baseline.plus(claim.clone()))
            .with_wealth(self.wealth + extra);
        solver::solve(&problem, self.solver_tol)
    }

    /// `pi_s(c)` with the given bracket hint `(lo, hi)`.
    pub fn sell(&self, claim: &ClaimSpec, price_tol: f64, hint: (f64, f64)) -> Result<SideResult> {
        if !(price_tol > 0.0) {
            return Err(Error::Validation(format!("price tolerance must be positive, got {price_tol}")));
        }
        claim.validate()?;
        let target = self.baseline_result.entropic_risk;
        let mut max_kkt = self.baseline_result.kkt_residual;
        let mut excess = |w: f64| -> Result<f64> {
            let r = self.solve_with(claim, w)?;
            max_kkt = max_kkt.max(r.kkt_residual);
            Ok(r.entropic_risk - target)
        };

        let (mut lo, mut hi) = hint;
        if !(lo < hi) {
            return Err(Error::Validation("empty price bracket".into()));
        }
        let mut expansions = 0;
        while excess(hi)? > 0.0 {
            expansions += 1;
            if expansions > MAX_EXPANSIONS {
                return Err(unpriceable());
            }
            let width = hi - lo;
            lo = hi;
            hi += 2.0 * width;
        }
        while excess(lo)? <= 0.0 {
            expansions += 1;
            if expansions > MAX_EXPANSIONS {
                return Err(unpriceable());
            }
            let width = hi - lo;
            hi = lo;
            lo -= 2.0 * width;
        }

        let mut iterations = 0;
        while hi - lo > price_tol {
            let mid = 0.5 * (lo + hi);
            if excess(mid)? <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            iterations += 1;
        }
        let price = 0.5 * (lo + hi);
        let after = self.solve_with(claim, price)?;
        max_kkt = max_kkt.max(after.kkt_residual);
        Ok(SideResult {
            price,
            hedge: after.portfolio.minus(&self.baseline_result.portfolio),
            bracket: (lo, hi),
            iterations,
            max_kkt_residual: max_kkt,
        })
    }
}

fn unpriceable() -> Error {
    Error::Unpriceable(format!(
        "no price bracket after {MAX_EXPANSIONS} expansions; the claim's risk exceeds what the market can absorb"
    ))
}

/// The quoted option with the same payoff as `claim`, if any.
fn quoted_twin(book: &QuoteBook, claim: &ClaimSpec) -> Option<String> {
    let kind = match claim {
        ClaimSpec::Call { strike } => InstrumentKind::Call { strike: *strike },
        ClaimSpec::Put { strike } => InstrumentKind::Put { strike: *strike },
        ClaimSpec::Scaled { inner, .. } => return quoted_twin(book, inner),
        _ => return None,
    };
    book.find_option(&kind).map(|i| book.instruments()[i].id.clone())
}

/// Hedging set used for `claim` under `options`.
pub fn hedging_book(book: &QuoteBook, claim: &ClaimSpec, options: &PricingOptions) -> Result<QuoteBook> {
    match quoted_twin(book, claim) {
        Some(id) if options.exclude_from_hedging => book.without(&id),
        _ => Ok(book.clone()),
    }
}

/// Sub- and superhedging costs, or `None` where the LP has no answer.
fn hedge_bounds(book: &QuoteBook, claim: &ClaimSpec, interval: (f64, f64)) -> (Option<f64>, Option<f64>) {
    let sub = bounds::subhedge(book, claim, interval).ok().map(|r| r.cost);
    let sup = bounds::superhedge(book, claim, interval).ok().map(|r| r.cost);
    (sub, sup)
}

fn bracket(
    sub: Option<f64>,
    sup: Option<f64>,
    scale: f64,
    wealth: f64,
    price_tol: f64,
) -> (f64, f64) {
    let buffer = 1e-3 * scale + price_tol;
    let floor = -0.5 * wealth;
    let lo = sub.map_or(-scale, |s| s - buffer).max(floor);
    let hi = sup.map_or(scale, |s| s + buffer).max(lo + buffer);
    (lo, hi)
}

/// Indifference buying and selling prices of `claim` for an agent with the
/// given baseline liability.
pub fn price(
    book: &QuoteBook,
    grid: &ScenarioGrid,
    prefs: &Preferences,
    baseline: &Liability,
    claim: &ClaimSpec,
    options: &PricingOptions,
) -> Result<PriceResult> {
    let hedging = hedging_book(book, claim, options)?;
    let pricer = Pricer::new(&hedging, grid, prefs, baseline, options.solver_tol)?;
    price_with(&pricer, claim, options)
}

/// As [`price`], reusing the baseline solve held by `pricer`.
pub fn price_with(pricer: &Pricer, claim: &ClaimSpec, options: &PricingOptions) -> Result<PriceResult> {
    claim.validate()?;
    let price_tol = options.price_tol_for(claim);
    let scale = claim.scale_on(options.interval.0, options.interval.1);
    let (sub, sup) = hedge_bounds(pricer.book(), claim, options.interval);
    let wealth = pricer.wealth;

    let sell = pricer.sell(claim, price_tol, bracket(sub, sup, scale, wealth, price_tol))?;
    let neg = claim.negated();
    let buy_side = pricer.sell(
        &neg,
        price_tol,
        bracket(sup.map(|s| -s), sub.map(|s| -s), scale, wealth, price_tol),
    )?;
    let base = pricer.baseline();
    Ok(PriceResult {
        sell_price: sell.price,
        buy_price: -buy_side.price,
        hedge_sell: sell.hedge,
        hedge_buy: buy_side.hedge,
        instrument_ids: pricer.book().instruments().iter().map(|i| i.id.clone()).collect(),
        baseline_value: base.objective,
        baseline_entropic_risk: base.entropic_risk,
        baseline_portfolio: base.portfolio.clone(),
        iterations: sell.iterations + buy_side.iterations,
        bracket_sell: sell.bracket,
        bracket_buy: (-buy_side.bracket.1, -buy_side.bracket.0),
        superhedge_cost: sup,
        subhedge_cost: sub,
        price_tol,
        solver_tol: options.solver_tol,
        max_kkt_residual: sell.max_kkt_residual.max(buy_side.max_kkt_residual),
    })
}

/// Selling price alone.
pub fn indifference_sell(
    book: &QuoteBook,
    grid: &ScenarioGrid,
    prefs: &Preferences,
    baseline: &Liability,
    claim: &ClaimSpec,
    price_tol: f64,
) -> Result<SideResult> {
    let options = PricingOptions { price_tol: Some(price_tol), ..PricingOptions::default() };
    let pricer = Pricer::new(book, grid, prefs, baseline, options.solver_tol)?;
    let scale = claim.scale_on(options.interval.0, options.interval.1);
    let (sub, sup) = hedge_bounds(book, claim, options.interval);
    pricer.sell(claim, price_tol, bracket(sub, sup, scale, prefs.wealth, price_tol))
}

/// Buying price alone, computed as the negated selling price of `-claim`.
pub fn indifference_buy(
    book: &QuoteBook,
    grid: &ScenarioGrid,
    prefs: &Preferences,
    baseline: &Liability,
    claim: &ClaimSpec,
    price_tol: f64,
) -> Result<SideResult> {
    let mut side = indifference_sell(book, grid, prefs, baseline, &claim.negated(), price_tol)?;
    side.price = -side.price;
    side.bracket = (-side.bracket.1, -side.bracket.0);
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{Instrument, Quote, RatePair};
    use crate::scenarios::{build_grid, ViewModel};

    fn cash_book() -> QuoteBook {
        let rates = RatePair::new(0.03, 0.0043).unwrap();
        QuoteBook::new(vec![Instrument::cash(rates)], vec![Quote::cash()], 2056.32, 0.19).unwrap()
    }

    fn grid() -> ScenarioGrid {
        build_grid(&ViewModel::new(0.0, 0.0554, 4.8355, 2056.32).unwrap(), 10, 6, 1e-5).unwrap()
    }

    #[test]
    fn cash_only_value_function() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let g = grid();
        for w in [50_000.0, 100_000.0, 150_000.0] {
            let v = value_function(&cash_book(), &g, &prefs, &Liability::zero(), w).unwrap();
            let expected = (-2.0 * (0.0043f64 * 0.19).exp() * w / 100_000.0).exp();
            assert!((v / expected - 1.0).abs() < 1e-8, "{v} vs {expected}");
        }
    }

    #[test]
    fn constant_claim_translates_value() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let g = grid();
        let k = 2_500.0;
        let v0 = value_function(&cash_book(), &g, &prefs, &Liability::zero(), 100_000.0).unwrap();
        let claim: Liability = ClaimSpec::Constant { amount: k }.into();
        let v1 = value_function(&cash_book(), &g, &prefs, &claim, 100_000.0).unwrap();
        assert!((v1 / (v0 * (2.0 * k / 100_000.0f64).exp()) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_claim_sells_at_discounted_amount() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let claim = ClaimSpec::Constant { amount: 1_000.0 };
        let options = PricingOptions::default();
        let r = price(&cash_book(), &grid(), &prefs, &Liability::zero(), &claim, &options).unwrap();
        let expected = 1_000.0 * (-0.0043f64 * 0.19).exp();
        assert!((r.sell_price - expected).abs() <= r.price_tol, "{}", r.sell_price);
        assert!(r.bracket_sell.1 - r.bracket_sell.0 <= r.price_tol);
        assert!(r.buy_price <= r.sell_price + 2.0 * r.price_tol);
    }

    #[test]
    fn zero_claim_has_zero_prices() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let r = price(&cash_book(), &grid(), &prefs, &Liability::zero(), &ClaimSpec::zero(), &PricingOptions::default())
            .unwrap();
        assert!(r.sell_price.abs() <= r.price_tol);
        assert!(r.buy_price.abs() <= r.price_tol);
    }

    #[test]
    fn buy_side_is_negated_sell_of_negated_claim() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let claim = ClaimSpec::Constant { amount: 300.0 };
        let b = indifference_buy(&cash_book(), &grid(), &prefs, &Liability::zero(), &claim, 1e-3).unwrap();
        let s = indifference_sell(&cash_book(), &grid(), &prefs, &Liability::zero(), &claim.negated(), 1e-3).unwrap();
        assert_eq!(b.price, -s.price);
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let r = indifference_sell(&cash_book(), &grid(), &prefs, &Liability::zero(), &ClaimSpec::zero(), 0.0);
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
