use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff of a European claim as a function of the underlying at maturity.
///
/// JSON form is internally tagged by `kind`, e.g.
/// `{"kind":"digital","strike":2050,"amount":10000}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClaimSpec {
    Call { strike: f64 },
    Put { strike: f64 },
    /// Pays `amount` when `X_T >= strike`.
    Digital { strike: f64, amount: f64 },
    /// `(X_T - strike)^2`
    QuadraticForward { strike: f64 },
    /// `scale * ln(strike / X_T)`
    LogForward { strike: f64, scale: f64 },
    /// Linear interpolation between breakpoints, flat outside them.
    PiecewiseLinear { breakpoints: Vec<f64>, values: Vec<f64> },
    Constant { amount: f64 },
    Scaled { multiplier: f64, inner: Box<ClaimSpec> },
}

impl ClaimSpec {
    pub fn zero() -> Self {
        ClaimSpec::Constant { amount: 0.0 }
    }

    pub fn scaled(self, multiplier: f64) -> Self {
        ClaimSpec::Scaled {
            multiplier,
            inner: Box::new(self),
        }
    }

    pub fn negated(&self) -> Self {
        self.clone().scaled(-1.0)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ClaimSpec::Constant { amount } => *amount == 0.0,
            ClaimSpec::Scaled { multiplier, inner } => *multiplier == 0.0 || inner.is_zero(),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be positive, got {v}")))
            }
        };
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be finite")))
            }
        };
        match self {
            ClaimSpec::Call { strike } | ClaimSpec::Put { strike } => positive("strike", *strike),
            ClaimSpec::QuadraticForward { strike } => positive("strike", *strike),
            ClaimSpec::Digital { strike, amount } => {
                positive("strike", *strike)?;
                finite("amount", *amount)
            }
            ClaimSpec::LogForward { strike, scale } => {
                positive("strike", *strike)?;
                finite("scale", *scale)
            }
            ClaimSpec::PiecewiseLinear { breakpoints, values } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return Err(Error::Validation(
                        "breakpoints and values must be nonempty and of equal length".into(),
                    ));
                }
                if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Validation("breakpoints must be strictly increasing".into()));
                }
                for v in breakpoints.iter().chain(values) {
                    finite("breakpoint/value", *v)?;
                }
                Ok(())
            }
            ClaimSpec::Constant { amount } => finite("amount", *amount),
            ClaimSpec::Scaled { multiplier, inner } => {
                finite("multiplier", *multiplier)?;
                inner.validate()
            }
        }
    }

    pub fn payoff(&self, x: f64) -> f64 {
        match self {
            ClaimSpec::Call { strike } => (x - strike).max(0.0),
            ClaimSpec::Put { strike } => (strike - x).max(0.0),
            ClaimSpec::Digital { strike, amount } => {
                if x >= *strike {
                    *amount
                } else {
                    0.0
                }
            }
            ClaimSpec::QuadraticForward { strike } => (x - strike) * (x - strike),
            ClaimSpec::LogForward { strike, scale } => scale * (strike / x).ln(),
            ClaimSpec::PiecewiseLinear { breakpoints, values } => {
                interpolate(breakpoints, values, x)
            }
            ClaimSpec::Constant { amount } => *amount,
            ClaimSpec::Scaled { multiplier, inner } => multiplier * inner.payoff(x),
        }
    }

    /// Points where the payoff is continuous but its slope jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            ClaimSpec::Call { strike } | ClaimSpec::Put { strike } => vec![*strike],
            ClaimSpec::PiecewiseLinear { breakpoints, .. } => breakpoints.clone(),
            ClaimSpec::Scaled { inner, .. } => inner.kinks(),
            _ => Vec::new(),
        }
    }

    /// Points where the payoff itself jumps (value is right-continuous).
    pub fn jumps(&self) -> Vec<f64> {
        match self {
            ClaimSpec::Digital { strike, .. } => vec![*strike],
            ClaimSpec::Scaled { inner, .. } => inner.jumps(),
            _ => Vec::new(),
        }
    }

    /// True when the payoff is linear between its kinks.
    pub fn is_piecewise_linear(&self) -> bool {
        match self {
            ClaimSpec::QuadraticForward { .. } | ClaimSpec::LogForward { .. } => false,
            ClaimSpec::Scaled { inner, .. } => inner.is_piecewise_linear(),
            _ => true,
        }
    }

    /// Right derivative, or `None` when the claim is not a difference of
    /// convex functions (jumps).
    pub fn right_slope(&self, x: f64) -> Option<f64> {
        Some(match self {
            ClaimSpec::Call { strike } => f64::from(x >= *strike),
            ClaimSpec::Put { strike } => -f64::from(x < *strike),
            ClaimSpec::Digital { .. } => return None,
            ClaimSpec::QuadraticForward { strike } => 2.0 * (x - strike),
            ClaimSpec::LogForward { scale, .. } => -scale / x,
            ClaimSpec::PiecewiseLinear { breakpoints, values } => {
                let i = breakpoints.partition_point(|b| *b <= x);
                if i == 0 || i == breakpoints.len() {
                    0.0
                } else {
                    (values[i] - values[i - 1]) / (breakpoints[i] - breakpoints[i - 1])
                }
            }
            ClaimSpec::Constant { .. } => 0.0,
            ClaimSpec::Scaled { multiplier, inner } => multiplier * inner.right_slope(x)?,
        })
    }

    /// Largest `|payoff|` on `[lo, hi]`, at least 1.
    ///
    /// Every supported kind is monotone or convex between its kinks and
    /// jumps, so checking those points and the endpoints is exact.
    pub fn scale_on(&self, lo: f64, hi: f64) -> f64 {
        let mut points = vec![lo, hi];
        for p in self.kinks().into_iter().chain(self.jumps()) {
            if p > lo && p < hi {
                points.push(p);
                points.push(p * (1.0 - 1e-12));
            }
        }
        points
            .into_iter()
            .map(|x| self.payoff(x).abs())
            .fold(1.0, f64::max)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|b| *b <= x);
    if i == 0 {
        ys[0]
    } else if i == xs.len() {
        ys[xs.len() - 1]
    } else {
        let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        ys[i - 1] + t * (ys[i] - ys[i - 1])
    }
}
