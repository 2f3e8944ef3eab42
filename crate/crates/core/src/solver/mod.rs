//! The finite-liquidity portfolio problem and its solution.
//!
//! Given a quote book, a scenario grid, exponential preferences and a
//! liability `c`, we minimize
//!
//! ```text
//! F(x+, x-) = sum_k w_k exp(lambda / w_s * (c_k - sum_j p+_j(x_k) x+_j + p-_j(x_k) x-_j))
//! ```
//!
//! over `0 <= x+ <= ask depth`, `0 <= x- <= bid depth` subject to the single
//! budget row `sum_j ask_j x+_j - bid_j x-_j <= wealth`. Internally the
//! solver minimizes `log F` (the entropic risk), which has the same minimizers
//! and cannot overflow.

mod ipm;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::{InstrumentKind, QuoteBook};
use crate::pricing::ClaimSpec;
use crate::scenarios::ScenarioGrid;

pub use ipm::SolveOptions;

/// Nonnegative long and short unit positions, aligned with the book order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPortfolio {
    pub long: Vec<f64>,
    pub short: Vec<f64>,
}

impl SplitPortfolio {
    pub fn zero(n: usize) -> Self {
        Self {
            long: vec![0.0; n],
            short: vec![0.0; n],
        }
    }

    /// Split representation of signed net positions.
    pub fn from_net(net: &[f64]) -> Self {
        Self {
            long: net.iter().map(|x| x.max(0.0)).collect(),
            short: net.iter().map(|x| (-x).max(0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.long.len()
    }

    pub fn is_empty(&self) -> bool {
        self.long.is_empty()
    }

    pub fn net(&self) -> Vec<f64> {
        self.long.iter().zip(&self.short).map(|(l, s)| l - s).collect()
    }

    /// Same net positions without simultaneous long and short holdings.
    pub fn netted(&self) -> Self {
        Self::from_net(&self.net())
    }

    /// Net difference `self - other` in split form.
    pub fn minus(&self, other: &SplitPortfolio) -> Self {
        let net: Vec<f64> = self.net().iter().zip(other.net()).map(|(a, b)| a - b).collect();
        Self::from_net(&net)
    }

    /// Concatenated `(long, short)` decision vector.
    pub fn to_vector(&self) -> Vec<f64> {
        self.long.iter().chain(&self.short).copied().collect()
    }

    pub fn from_vector(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self {
            long: v[..n].to_vec(),
            short: v[n..].to_vec(),
        }
    }

    /// Number of instruments whose net position exceeds `threshold` units.
    pub fn support(&self, threshold: f64) -> usize {
        self.net().iter().filter(|x| x.abs() > threshold).count()
    }

    /// Terminal payoff of the split positions at underlying level `x_t`.
    pub fn payoff(&self, book: &QuoteBook, x_t: f64) -> f64 {
        let t = book.maturity();
        book.instruments()
            .iter()
            .enumerate()
            .map(|(j, i)| {
                i.long_coefficient(x_t, t) * self.long[j] + i.short_coefficient(x_t, t) * self.short[j]
            })
            .sum()
    }

    /// Entry cost of the split positions.
    pub fn cost(&self, book: &QuoteBook) -> f64 {
        book.quotes()
            .iter()
            .enumerate()
            .map(|(j, q)| q.ask_price * self.long[j] - q.bid_price * self.short[j])
            .sum()
    }
}

/// Exponential preferences `v(c) = exp(lambda * c / scale_wealth)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub wealth: f64,
    pub risk_aversion: f64,
    pub scale_wealth: f64,
}

impl Preferences {
    /// Preferences whose loss scale is frozen at `wealth`.
    pub fn new(wealth: f64, risk_aversion: f64) -> Result<Self> {
        let prefs = Self {
            wealth,
            risk_aversion,
            scale_wealth: wealth,
        };
        prefs.validate()?;
        Ok(prefs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wealth", self.wealth),
            ("risk aversion", self.risk_aversion),
            ("scale wealth", self.scale_wealth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub(crate) fn risk_scale(&self) -> f64 {
        self.risk_aversion / self.scale_wealth
    }
}

/// Cash owed at maturity: a sum of claims (empty means nothing owed).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Liability {
    pub claims: Vec<ClaimSpec>,
}

impl Liability {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn plus(&self, claim: ClaimSpec) -> Self {
        let mut claims = self.claims.clone();
        claims.push(claim);
        Self { claims }
    }

    pub fn payoff(&self, x: f64) -> f64 {
        self.claims.iter().map(|c| c.payoff(x)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.claims.iter().try_for_each(ClaimSpec::validate)
    }
}

impl From<ClaimSpec> for Liability {
    fn from(claim: ClaimSpec) -> Self {
        Self { claims: vec![claim] }
    }
}

/// Assembled instance of the portfolio problem in split form.
///
/// The payoff matrix is shared, so re-targeting wealth or liability is cheap.
#[derive(Debug, Clone)]
pub struct Problem {
    nodes: Arc<Vec<f64>>,
    weights: Arc<Vec<f64>>,
    /// Scenario-by-variable payoff matrix, columns `[long_0.., short_0..]`.
    payoff: Arc<DMatrix<f64>>,
    cost: Arc<Vec<f64>>,
    upper: Arc<Vec<Option<f64>>>,
    /// Instruments whose long and short legs mirror each other exactly.
    mirrored: Arc<Vec<bool>>,
    cash_index: usize,
    liability: Vec<f64>,
    wealth: f64,
    risk_scale: f64,
}

/// Builds the split problem for `book` on `grid`.
pub fn assemble(
    book: &QuoteBook,
    grid: &ScenarioGrid,
    prefs: &Preferences,
    liability: &Liability,
) -> Result<Problem> {
    prefs.validate()?;
    liability.validate()?;
    if grid.is_empty() {
        return Err(Error::Validation("scenario grid is empty".into()));
    }
    let n = book.len();
    let k = grid.len();
    let t = book.maturity();
    let mut payoff = DMatrix::zeros(k, 2 * n);
    for (j, instrument) in book.instruments().iter().enumerate() {
        for (row, x) in grid.nodes().iter().enumerate() {
            payoff[(row, j)] = instrument.long_coefficient(*x, t);
            payoff[(row, n + j)] = instrument.short_coefficient(*x, t);
        }
    }
    let mut cost = vec![0.0; 2 * n];
    let mut upper = vec![None; 2 * n];
    let mut mirrored = vec![false; n];
    for (j, quote) in book.quotes().iter().enumerate() {
        cost[j] = quote.ask_price;
        cost[n + j] = -quote.bid_price;
        upper[j] = quote.ask_depth;
        upper[n + j] = quote.bid_depth;
        let legs_mirror = (0..k).all(|row| payoff[(row, j)] == -payoff[(row, n + j)]);
        mirrored[j] = legs_mirror && quote.spread() == 0.0;
    }
    let cash_index = book
        .instruments()
        .iter()
        .position(|i| matches!(i.kind, InstrumentKind::Cash(_)))
        .expect("validated book holds cash");
    let problem = Problem {
        nodes: Arc::new(grid.nodes().to_vec()),
        weights: Arc::new(grid.weights().to_vec()),
        payoff: Arc::new(payoff),
        cost: Arc::new(cost),
        upper: Arc::new(upper),
        mirrored: Arc::new(mirrored),
        cash_index,
        liability: Vec::new(),
        wealth: prefs.wealth,
        risk_scale: prefs.risk_scale(),
    };
    Ok(problem.with_liability(liability))
}

impl Problem {
    pub fn num_instruments(&self) -> usize {
        self.mirrored.len()
    }

    /// Length of the split decision vector.
    pub fn num_variables(&self) -> usize {
        2 * self.num_instruments()
    }

    /// Lower bounds, finite upper bounds and the budget row.
    pub fn num_constraints(&self) -> usize {
        self.num_variables() + self.upper.iter().filter(|u| u.is_some()).count() + 1
    }

    pub fn num_scenarios(&self) -> usize {
        self.nodes.len()
    }

    pub fn wealth(&self) -> f64 {
        self.wealth
    }

    pub fn with_wealth(&self, wealth: f64) -> Self {
        Self {
            wealth,
            ..self.clone()
        }
    }

    pub fn with_liability(&self, liability: &Liability) -> Self {
        let values = self.nodes.iter().map(|x| liability.payoff(*x)).collect();
        Self {
            liability: values,
            ..self.clone()
        }
    }

    pub fn liability_values(&self) -> &[f64] {
        &self.liability
    }

    pub fn budget_coefficients(&self) -> &[f64] {
        &self.cost
    }

    pub fn upper_bounds(&self) -> &[Option<f64>] {
        &self.upper
    }

    /// True when `y` lies in the depth box and satisfies the budget.
    pub fn is_feasible(&self, y: &[f64]) -> bool {
        y.len() == self.num_variables()
            && y.iter().zip(self.upper.iter()).all(|(v, u)| *v >= 0.0 && u.is_none_or(|u| *v <= u))
            && self.budget_used(y) <= self.wealth
    }

    pub fn budget_used(&self, y: &[f64]) -> f64 {
        self.cost.iter().zip(y).map(|(c, v)| c * v).sum()
    }

    /// Terminal wealth per scenario: portfolio payoff minus liability.
    pub fn terminal_payoffs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.num_scenarios())
            .map(|row| {
                let hedge: f64 = self.payoff.row(row).iter().zip(y).map(|(a, v)| a * v).sum();
                hedge - self.liability[row]
            })
            .collect()
    }

    /// Exponents `lambda/w_s * (c_k - payoff_k) + ln w_k` and their maximum.
    fn shifted_exponents(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let exps: Vec<f64> = self
            .terminal_payoffs(y)
            .iter()
            .zip(self.weights.iter())
            .map(|(net, w)| -self.risk_scale * net + w.ln())
            .collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (exps, max)
    }

    /// `log F(y)`, evaluated without overflow.
    pub fn entropic(&self, y: &[f64]) -> f64 {
        let (exps, max) = self.shifted_exponents(y);
        max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln()
    }

    /// Expected loss `F(y)`.
    pub fn objective(&self, y: &[f64]) -> f64 {
        self.entropic(y).exp()
    }

    /// Analytic gradient of `F`.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let (exps, max) = self.shifted_exponents(y);
        let scale = max.exp();
        let terms: Vec<f64> = exps.iter().map(|e| (e - max).exp() * scale).collect();
        (0..self.num_variables())
            .map(|col| {
                -self.risk_scale
                    * self.payoff.column(col).iter().zip(&terms).map(|(a, t)| a * t).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Iteration limit reached; the best iterate found is reported.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub portfolio: SplitPortfolio,
    /// Expected loss `E v(c - payoff)`.
    pub objective: f64,
    /// `log(objective)`.
    pub entropic_risk: f64,
    pub budget_slack: f64,
    pub kkt_residual: f64,
    /// Sum of complementarity products, bounding `entropic_risk - optimum`.
    pub duality_gap: f64,
    /// Multiplier of the budget row for the entropic objective
    /// (marginal risk reduction per unit of wealth).
    pub budget_multiplier: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub scenario_payoffs: Vec<f64>,
}

/// Logarithm of the expected loss.
pub fn entropic_risk(result: &SolveResult) -> f64 {
    result.objective.ln()
}

/// Solves `problem` to the relative KKT tolerance `tol`.
pub fn solve(problem: &Problem, tol: f64) -> Result<SolveResult> {
    solve_with(problem, &SolveOptions { tol, ..SolveOptions::default() })
}

pub fn solve_with(problem: &Problem, options: &SolveOptions) -> Result<SolveResult> {
    if !(options.tol > 0.0 && options.tol < 1.0) {
        return Err(Error::Validation(format!("tolerance must lie in (0, 1), got {}", options.tol)));
    }
    if problem.liability.iter().any(|c| !c.is_finite()) {
        return Err(Error::Validation("liability is not finite on the grid".into()));
    }
    let raw = ipm::run(problem, options)?;
    let portfolio = SplitPortfolio::from_vector(&raw.y).netted();
    let y = portfolio.to_vector();
    let entropic = problem.entropic(&y);
    if !entropic.is_finite() {
        return Err(Error::Solver("objective is not finite at the solution".into()));
    }
    Ok(SolveResult {
        objective: entropic.exp(),
        entropic_risk: entropic,
        budget_slack: problem.wealth - problem.budget_used(&y),
        kkt_residual: raw.kkt_residual,
        duality_gap: raw.duality_gap,
        budget_multiplier: raw.budget_multiplier,
        iterations: raw.iterations,
        status: raw.status,
        scenario_payoffs: problem.terminal_payoffs(&y),
        portfolio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{Instrument, Quote, RatePair};
    use crate::scenarios::{build_grid, ViewModel};

    fn cash_book(t: f64) -> QuoteBook {
        let rates = RatePair::new(0.03, 0.0043).unwrap();
        QuoteBook::new(vec![Instrument::cash(rates)], vec![Quote::cash()], 2056.32, t).unwrap()
    }

    fn grid() -> ScenarioGrid {
        let m = ViewModel::new(0.0, 0.0554, 4.8355, 2056.32).unwrap();
        build_grid(&m, 10, 6, 1e-5).unwrap()
    }

    #[test]
    fn split_portfolio_helpers() {
        let p = SplitPortfolio { long: vec![3.0, 0.0], short: vec![1.0, 2.0] };
        assert_eq!(p.net(), vec![2.0, -2.0]);
        assert_eq!(p.netted(), SplitPortfolio { long: vec![2.0, 0.0], short: vec![0.0, 2.0] });
        assert_eq!(SplitPortfolio::from_vector(&p.to_vector()), p);
        assert_eq!(p.support(1.5), 2);
        let q = SplitPortfolio::from_net(&[1.0, 1.0]);
        assert_eq!(p.minus(&q).net(), vec![1.0, -3.0]);
    }

    #[test]
    fn objective_at_zero_portfolio() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let book = cash_book(0.19);
        let p = assemble(&book, &grid(), &prefs, &Liability::zero()).unwrap();
        let zero = vec![0.0; p.num_variables()];
        assert!((p.objective(&zero) - 1.0).abs() < 1e-14);
        assert!(p.entropic(&zero).abs() < 1e-14);
        let c = 5_000.0;
        let q = p.with_liability(&ClaimSpec::Constant { amount: c }.into());
        assert!((q.objective(&zero) / (2.0 * c / 100_000.0f64).exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cash_only_optimum_is_full_lending() {
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let t = 0.19;
        let p = assemble(&cash_book(t), &grid(), &prefs, &Liability::zero()).unwrap();
        let r = solve(&p, 1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.portfolio.long[0] / 100_000.0 - 1.0).abs() < 1e-7, "{:?}", r.portfolio);
        let expected = -2.0 * (0.0043f64 * t).exp();
        assert!((r.entropic_risk - expected).abs() < 1e-8 * (1.0 + expected.abs()));
        assert_eq!(entropic_risk(&r), r.objective.ln());
        assert!(r.budget_slack >= -1e-8 * 100_000.0);
        assert!(r.kkt_residual <= 1e-8);
    }

    #[test]
    fn bad_inputs() {
        assert!(Preferences::new(0.0, 2.0).is_err());
        assert!(Preferences::new(1.0, -2.0).is_err());
        let prefs = Preferences::new(100_000.0, 2.0).unwrap();
        let p = assemble(&cash_book(0.19), &grid(), &prefs, &Liability::zero()).unwrap();
        assert!(solve(&p, 0.0).is_err());
    }
}
