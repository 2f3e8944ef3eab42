//! Static replication of a smooth claim by bond, underlying and calls.
//!
//! For `x >= a`,
//! `c(x) = c(a) + c'(a) (x - a) + integral over (a, inf) of (x - K)^+ dc'(K)`.
//! The measure `dc'` is lumped onto the quoted call strikes: each strike
//! receives the mass between the midpoints to its neighbours.

use serde::{Deserialize, Serialize};

use super::ClaimSpec;
use crate::error::{Error, Result};
use crate::fixture::HEDGE_INTERVAL;
use crate::instruments::{InstrumentKind, QuoteBook};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub cost: f64,
    /// Cash paid out at maturity by the bond leg.
    pub bond_units: f64,
    /// Units of the underlying, held through the forward when quoted.
    pub underlying_units: f64,
    /// `(strike, signed units)` of calls.
    pub calls: Vec<(f64, f64)>,
    pub anchor: f64,
}

impl Replication {
    /// Payoff of the replicating portfolio at `x`.
    pub fn payoff(&self, x: f64) -> f64 {
        self.bond_units
            + self.underlying_units * x
            + self
                .calls
                .iter()
                .map(|(k, w)| w * (x - k).max(0.0))
                .sum::<f64>()
    }
}

/// Replication anchored at the low end of the default hedging interval.
pub fn bl_replication(book: &QuoteBook, claim: &ClaimSpec) -> Result<Replication> {
    bl_replication_on(book, claim, HEDGE_INTERVAL)
}

pub fn bl_replication_on(book: &QuoteBook, claim: &ClaimSpec, (lo, hi): (f64, f64)) -> Result<Replication> {
    claim.validate()?;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("bad replication interval [{lo}, {hi}]")));
    }
    if !claim.jumps().is_empty() {
        return Err(Error::UnsupportedClaim(
            "payoff jumps; its second derivative is not a measure".into(),
        ));
    }
    let slope = |x: f64| {
        claim
            .right_slope(x)
            .ok_or_else(|| Error::UnsupportedClaim("claim has no derivative".into()))
    };
    let mut calls: Vec<(f64, usize)> = book
        .instruments()
        .iter()
        .enumerate()
        .filter_map(|(j, i)| match i.kind {
            InstrumentKind::Call { strike } if strike >= lo && strike <= hi => Some((strike, j)),
            _ => None,
        })
        .collect();
    calls.sort_by(|a, b| a.0.total_cmp(&b.0));
    if calls.len() < 2 {
        return Err(Error::Validation("replication needs at least two call strikes".into()));
    }

    let t = book.maturity();
    let discount = (-book.rates().lend_rate * t).exp();
    let a = lo;
    let c0 = claim.payoff(a);
    let d0 = slope(a)?;
    let bond_units = c0 - d0 * a;
    let underlying_cost = match book.forward() {
        Some((_, ask, bid)) => d0 * if d0 >= 0.0 { ask } else { bid } * discount,
        None => d0 * book.spot(),
    };

    let quotes = book.quotes();
    let mut weights = Vec::with_capacity(calls.len());
    let mut cost = bond_units * discount + underlying_cost;
    for (i, (strike, j)) in calls.iter().enumerate() {
        let left = if i == 0 { a } else { 0.5 * (calls[i - 1].0 + strike) };
        let right = if i + 1 == calls.len() { hi } else { 0.5 * (strike + calls[i + 1].0) };
        // right slopes: mass of dc' on [left, right), the first cell opening at a
        let from = if i == 0 { d0 } else { slope(left)? };
        let w = slope(right)? - from;
        let price = if w >= 0.0 { quotes[*j].ask_price } else { quotes[*j].bid_price };
        cost += w * price;
        weights.push((*strike, w));
    }
    Ok(Replication {
        cost,
        bond_units,
        underlying_units: d0,
        calls: weights,
        anchor: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn quoted_call_is_its_own_replica() {
        let book = fixture::book();
        let r = bl_replication(&book, &ClaimSpec::Call { strike: 2050.0 }).unwrap();
        let j = book.index_of("C2050").unwrap();
        assert!((r.cost - book.quotes()[j].ask_price).abs() < 1e-9);
        for (k, w) in &r.calls {
            let expected = if *k == 2050.0 { 1.0 } else { 0.0 };
            assert_eq!(*w, expected, "strike {k}");
        }
        assert_eq!(r.bond_units, 0.0);
        assert_eq!(r.underlying_units, 0.0);
    }

    #[test]
    fn constant_is_a_bond() {
        let book = fixture::book();
        let r = bl_replication(&book, &ClaimSpec::Constant { amount: 500.0 }).unwrap();
        assert!((r.cost - 500.0 * (-0.0043f64 * 0.19).exp()).abs() < 1e-9);
        assert!(r.calls.iter().all(|(_, w)| *w == 0.0));
    }

    #[test]
    fn digital_rejected() {
        let r = bl_replication(&fixture::book(), &ClaimSpec::Digital { strike: 2050.0, amount: 1.0 });
        assert!(matches!(r, Err(Error::UnsupportedClaim(_))));
    }

    #[test]
    fn put_reconstructs_exactly() {
        let book = fixture::book();
        let claim = ClaimSpec::Put { strike: 2000.0 };
        let r = bl_replication(&book, &claim).unwrap();
        for x in [100.0, 1500.0, 1999.0, 2000.0, 2100.0, 4000.0] {
            assert!((r.payoff(x) - claim.payoff(x)).abs() < 1e-9, "x={x}");
        }
    }
}
