//! Super- and subhedging costs by linear programming.
//!
//! Dominance `hedge(x) >= claim(x)` is imposed at a finite set of points of
//! a compact interval. Every instrument payoff is linear between strikes, so
//! for claims that are linear or concave between their own breakpoints the
//! breakpoint constraints are exact. Elsewhere a refinement grid is added and
//! the result is checked on a grid ten times finer; violated points are fed
//! back as new constraints until the check passes.

use microlp::{ComparisonOp, OptimizationDirection, Problem as Lp, Solution, Variable};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::QuoteBook;
use crate::pricing::ClaimSpec;
use crate::solver::SplitPortfolio;

/// Interior points added between consecutive breakpoints.
pub const REFINEMENT: usize = 8;
/// Relative offset of the point placed just left of a digital jump.
pub const JUMP_EPS: f64 = 1e-6;
const MAX_CUTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeBoundResult {
    /// Cost of the cheapest superhedge (`superhedge`) or revenue of the
    /// dearest subhedge (`subhedge`).
    pub cost: f64,
    pub portfolio: SplitPortfolio,
    /// Levels where the dominance constraint is active.
    pub binding_points: Vec<f64>,
    /// Minimum slack of the dominance inequality on the verification grid.
    pub verification_margin: f64,
    /// LP multipliers of the dominance constraints: a discrete pricing
    /// measure on the constraint points, as `(level, weight)`.
    pub pricing_measure: Vec<(f64, f64)>,
}

/// Cheapest portfolio whose payoff dominates `claim` on `interval`.
pub fn superhedge(book: &QuoteBook, claim: &ClaimSpec, interval: (f64, f64)) -> Result<HedgeBoundResult> {
    check_interval(interval)?;
    claim.validate()?;
    let scale = claim.scale_on(interval.0, interval.1);
    let tol = 1e-9 * (1.0 + scale);
    let mut points = constraint_points(book, claim, interval);
    let verify = verification_points(book, claim, interval, 10 * REFINEMENT);
    for _ in 0..MAX_CUTS {
        let mut result = superhedge_on_points(book, claim, &points)?;
        let slacks = slacks(book, &result.portfolio, claim, &verify);
        let margin = slacks.iter().copied().fold(f64::INFINITY, f64::min);
        result.verification_margin = margin;
        if margin >= -tol {
            return Ok(result);
        }
        let before = points.len();
        points.extend(
            verify
                .iter()
                .zip(&slacks)
                .filter(|(_, s)| **s < -tol)
                .map(|(x, _)| *x),
        );
        points.sort_by(f64::total_cmp);
        points.dedup();
        if points.len() == before {
            return Ok(result);
        }
    }
    // out of rounds: return the last candidate with its honest margin
    let mut result = superhedge_on_points(book, claim, &points)?;
    result.verification_margin = verify_dominance(book, &result.portfolio, claim, interval, 10_000)?;
    Ok(result)
}

/// Most expensive portfolio dominated by `claim`, priced at its revenue:
/// `subhedge(c).cost = -superhedge(-c).cost`.
pub fn subhedge(book: &QuoteBook, claim: &ClaimSpec, interval: (f64, f64)) -> Result<HedgeBoundResult> {
    let mut result = superhedge(book, &claim.negated(), interval)?;
    result.cost = -result.cost;
    result.portfolio = SplitPortfolio {
        long: result.portfolio.short,
        short: result.portfolio.long,
    };
    Ok(result)
}

/// Superhedge LP with dominance imposed only at `points`.
///
/// The verification margin reported is the minimum slack over `points`.
pub fn superhedge_on_points(book: &QuoteBook, claim: &ClaimSpec, points: &[f64]) -> Result<HedgeBoundResult> {
    claim.validate()?;
    if points.is_empty() || points.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Validation("constraint points must be positive".into()));
    }
    let t = book.maturity();
    let quotes = book.quotes();
    let cost: Vec<f64> = quotes
        .iter()
        .map(|q| q.ask_price)
        .chain(quotes.iter().map(|q| -q.bid_price))
        .collect();
    let upper: Vec<Option<f64>> = quotes
        .iter()
        .map(|q| q.ask_depth)
        .chain(quotes.iter().map(|q| q.bid_depth))
        .collect();
    let rows: Vec<Vec<f64>> = points.iter().map(|x| payoff_row(book, *x, t)).collect();
    let rhs: Vec<f64> = points.iter().map(|x| claim.payoff(*x)).collect();

    let mut lp = Lp::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = cost
        .iter()
        .zip(&upper)
        .map(|(c, u)| lp.add_var(*c, (0.0, u.unwrap_or(f64::INFINITY))))
        .collect();
    for (row, b) in rows.iter().zip(&rhs) {
        let terms: Vec<(Variable, f64)> = vars
            .iter()
            .zip(row)
            .filter(|(_, a)| **a != 0.0)
            .map(|(v, a)| (*v, *a))
            .collect();
        lp.add_constraint(&terms, ComparisonOp::Ge, *b);
    }
    let solution = match run(&lp, "hedging LP")? {
        Outcome::Solved(s) => s,
        Outcome::Infeasible => {
            return Err(Error::Infeasible {
                regions: violating_regions(book, claim, points)?,
            })
        }
        Outcome::Unbounded => {
            return Err(Error::Unpriceable("hedging LP is unbounded (market admits arbitrage)".into()))
        }
    };
    let mut y: Vec<f64> = vars.iter().map(|v| solution.var_value(*v).max(0.0)).collect();
    if let Some(snapped) = polish(&cost, &rows, &rhs, &upper, &y) {
        y = snapped;
    }
    let portfolio = SplitPortfolio::from_vector(&y);
    let slack = slacks(book, &portfolio, claim, points);
    let scale = points.iter().map(|x| claim.payoff(*x).abs()).fold(1.0, f64::max);
    let active = 1e-7 * (1.0 + scale);
    let binding_points = points
        .iter()
        .zip(&slack)
        .filter(|(_, s)| s.abs() <= active)
        .map(|(x, _)| *x)
        .collect();
    Ok(HedgeBoundResult {
        cost: portfolio.cost(book),
        verification_margin: slack.iter().copied().fold(f64::INFINITY, f64::min),
        pricing_measure: pricing_measure(book, claim, points)?,
        binding_points,
        portfolio,
    })
}

/// Minimum of `hedge payoff - claim` over a uniform grid of `grid_points`
/// levels on `interval`, plus the claim's kinks, jump sides and the strikes.
pub fn verify_dominance(
    book: &QuoteBook,
    portfolio: &SplitPortfolio,
    claim: &ClaimSpec,
    interval: (f64, f64),
    grid_points: usize,
) -> Result<f64> {
    check_interval(interval)?;
    if grid_points < 1000 {
        return Err(Error::Validation(format!("need at least 1000 grid points, got {grid_points}")));
    }
    if portfolio.len() != book.len() {
        return Err(Error::Validation("portfolio does not match the book".into()));
    }
    let (lo, hi) = interval;
    let mut points: Vec<f64> = (0..grid_points)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_points - 1) as f64)
        .collect();
    points.extend(special_points(book, claim, interval));
    Ok(slacks(book, portfolio, claim, &points)
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Snaps a simplex solution onto the vertex of its active set.
///
/// The LP answer carries round-off near 1e-8: dust positions in instruments
/// that play no part, and constraints met only approximately. Variables within
/// 1e-6 units of a bound are fixed there, nearly binding rows become
/// equations, and the free variables take the least-norm correction that
/// satisfies them. The snapped point is kept only when it is feasible and
/// costs no more than the original up to relative 1e-9.
fn polish(cost: &[f64], rows: &[Vec<f64>], rhs: &[f64], upper: &[Option<f64>], y: &[f64]) -> Option<Vec<f64>> {
    const AT_BOUND: f64 = 1e-6;
    let scale = rhs.iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let dot = |row: &[f64], v: &[f64]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut snapped = y.to_vec();
    let mut free = Vec::new();
    for (j, v) in snapped.iter_mut().enumerate() {
        if *v <= AT_BOUND {
            *v = 0.0;
        } else if let Some(u) = upper[j].filter(|u| *v >= u - AT_BOUND) {
            *v = u;
        } else {
            free.push(j);
        }
    }
    let binding: Vec<usize> = (0..rows.len())
        .filter(|&i| (dot(&rows[i], y) - rhs[i]).abs() <= 1e-6 * scale)
        .collect();
    if !free.is_empty() && !binding.is_empty() {
        let m = DMatrix::from_fn(binding.len(), free.len(), |r, c| rows[binding[r]][free[c]]);
        let residual = DVector::from_fn(binding.len(), |r, _| rhs[binding[r]] - dot(&rows[binding[r]], &snapped));
        let svd = m.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1.0);
        let step = svd.solve(&residual, eps).ok()?;
        for (c, j) in free.iter().enumerate() {
            snapped[*j] += step[c];
        }
    }
    let tol = 1e-12 * scale;
    let in_box = snapped
        .iter()
        .zip(upper)
        .all(|(v, u)| *v >= -tol && u.is_none_or(|u| *v <= u + tol));
    let dominates = rows.iter().zip(rhs).all(|(row, b)| dot(row, &snapped) >= b - tol);
    let (old, new) = (dot(cost, y), dot(cost, &snapped));
    for (v, u) in snapped.iter_mut().zip(upper) {
        *v = v.max(0.0);
        if let Some(u) = u {
            *v = v.min(*u);
        }
    }
    (in_box && dominates && new <= old + 1e-9 * (1.0 + old.abs())).then_some(snapped)
}

enum Outcome {
    Solved(Solution),
    Infeasible,
    Unbounded,
}

fn run(lp: &Lp, what: &str) -> Result<Outcome> {
    match lp.solve() {
        Ok(out) => out
            .into_solution()
            .map(Outcome::Solved)
            .map_err(|_| Error::Solver(format!("{what} was interrupted"))),
        Err(microlp::Error::Infeasible) => Ok(Outcome::Infeasible),
        Err(microlp::Error::Unbounded) => Ok(Outcome::Unbounded),
        Err(e) => Err(Error::Solver(format!("{what}: {e}"))),
    }
}

fn check_interval((lo, hi): (f64, f64)) -> Result<()> {
    if lo > 0.0 && hi > lo && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("bad hedging interval [{lo}, {hi}]")))
    }
}

fn payoff_row(book: &QuoteBook, x: f64, t: f64) -> Vec<f64> {
    let instruments = book.instruments();
    instruments
        .iter()
        .map(|i| i.long_coefficient(x, t))
        .chain(instruments.iter().map(|i| i.short_coefficient(x, t)))
        .collect()
}

fn slacks(book: &QuoteBook, portfolio: &SplitPortfolio, claim: &ClaimSpec, points: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|x| portfolio.payoff(book, *x) - claim.payoff(*x))
        .collect()
}

/// Endpoints, strikes, claim kinks and both sides of claim jumps.
fn special_points(book: &QuoteBook, claim: &ClaimSpec, (lo, hi): (f64, f64)) -> Vec<f64> {
    let inside = |x: &f64| *x >= lo && *x <= hi;
    let mut points = vec![lo, hi];
    points.extend(book.strikes().into_iter().filter(inside));
    points.extend(claim.kinks().into_iter().filter(inside));
    for k in claim.jumps() {
        points.extend([k, k * (1.0 - JUMP_EPS)].into_iter().filter(inside));
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// Special points plus `per_gap` equally spaced points inside each gap.
fn refine(points: &[f64], per_gap: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * (per_gap + 1));
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        out.push(a);
        out.extend((1..=per_gap).map(|i| a + (b - a) * i as f64 / (per_gap + 1) as f64));
    }
    out.extend(points.last());
    out
}

/// Constraint grid of the hedging LP.
pub fn constraint_points(book: &QuoteBook, claim: &ClaimSpec, interval: (f64, f64)) -> Vec<f64> {
    refine(&special_points(book, claim, interval), REFINEMENT)
}

fn verification_points(book: &QuoteBook, claim: &ClaimSpec, interval: (f64, f64), per_gap: usize) -> Vec<f64> {
    refine(&special_points(book, claim, interval), per_gap)
}

/// Multipliers of the dominance rows from the dual LP
/// `max sum_i c(x_i) q_i - sum_j u_j r_j` subject to
/// `sum_i a_ij q_i - r_j <= cost_j`, `q, r >= 0`.
fn pricing_measure(book: &QuoteBook, claim: &ClaimSpec, points: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = book.len();
    let t = book.maturity();
    let mut lp = Lp::new(OptimizationDirection::Maximize);
    let q: Vec<Variable> = points
        .iter()
        .map(|x| lp.add_var(claim.payoff(*x), (0.0, f64::INFINITY)))
        .collect();
    let rows: Vec<Vec<f64>> = points.iter().map(|x| payoff_row(book, *x, t)).collect();
    let quotes = book.quotes();
    for col in 0..2 * n {
        let (cost, depth) = if col < n {
            (quotes[col].ask_price, quotes[col].ask_depth)
        } else {
            (-quotes[col - n].bid_price, quotes[col - n].bid_depth)
        };
        let mut terms: Vec<(Variable, f64)> = q
            .iter()
            .zip(&rows)
            .filter(|(_, r)| r[col] != 0.0)
            .map(|(v, r)| (*v, r[col]))
            .collect();
        if let Some(u) = depth {
            let r = lp.add_var(-u, (0.0, f64::INFINITY));
            terms.push((r, -1.0));
        }
        lp.add_constraint(&terms, ComparisonOp::Le, cost);
    }
    let Outcome::Solved(solution) = run(&lp, "dual hedging LP")? else {
        return Err(Error::Solver("dual hedging LP has no optimum".into()));
    };
    Ok(points
        .iter()
        .zip(&q)
        .map(|(x, v)| (*x, solution.var_value(*v).max(0.0)))
        .collect())
}

/// Phase-one LP: minimal total shortfall; points with positive shortfall
/// are grouped into contiguous regions.
fn violating_regions(book: &QuoteBook, claim: &ClaimSpec, points: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = book.len();
    let t = book.maturity();
    let mut lp = Lp::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(2 * n);
    for quote in book.quotes() {
        vars.push(lp.add_var(0.0, (0.0, quote.ask_depth.unwrap_or(f64::INFINITY))));
    }
    for quote in book.quotes() {
        vars.push(lp.add_var(0.0, (0.0, quote.bid_depth.unwrap_or(f64::INFINITY))));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let shortfall: Vec<Variable> = sorted.iter().map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for (x, s) in sorted.iter().zip(&shortfall) {
        let mut terms: Vec<(Variable, f64)> = vars
            .iter()
            .zip(payoff_row(book, *x, t))
            .filter(|(_, a)| *a != 0.0)
            .map(|(v, a)| (*v, a))
            .collect();
        terms.push((*s, 1.0));
        lp.add_constraint(&terms, ComparisonOp::Ge, claim.payoff(*x));
    }
    let Outcome::Solved(solution) = run(&lp, "phase-one LP")? else {
        return Err(Error::Solver("phase-one LP has no optimum".into()));
    };
    let threshold = 1e-9 * (1.0 + sorted.iter().map(|x| claim.payoff(*x).abs()).fold(0.0, f64::max));
    let mut regions: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for (x, s) in sorted.iter().zip(&shortfall) {
        if solution.var_value(*s) > threshold {
            open = Some(open.map_or((*x, *x), |(a, _)| (a, *x)));
        } else if let Some(r) = open.take() {
            regions.push(r);
        }
    }
    regions.extend(open);
    Ok(regions)
}
