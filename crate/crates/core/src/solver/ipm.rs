//! Primal-dual interior point method for the entropic form of the problem.
//!
//! Works on a reduced, scaled copy of the split problem:
//! - legs whose long and short sides mirror each other at zero spread are
//!   merged into one signed variable (two mirrored legs form a flat ray that a
//!   log barrier would push to infinity);
//! - legs with an empty box are fixed at zero and dropped;
//! - each variable is scaled so its payoff column has unit weighted RMS in
//!   exponent units, and the budget row is normalized to unit max norm.
//!
//! The barrier parameter follows the monotone Fiacco-McCormick rule with a
//! fraction-to-boundary rule and Armijo backtracking on the barrier merit.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Problem, SolveStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target for the KKT residual of the scaled problem.
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            mu_init: 0.1,
        }
    }
}

pub(super) struct RawSolution {
    pub y: Vec<f64>,
    pub kkt_residual: f64,
    pub duality_gap: f64,
    pub budget_multiplier: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// One decision variable of the reduced problem.
#[derive(Debug, Clone, Copy)]
struct Var {
    /// Column of the split payoff matrix.
    col: usize,
    /// Split index receiving the negative part of a merged variable.
    mirror: Option<usize>,
    lo: f64,
    hi: f64,
}

const KAPPA_SIGMA: f64 = 1e10;
const BOUND_PUSH: f64 = 1e-2;

struct Scaled {
    vars: Vec<Var>,
    d: Vec<f64>,
    /// Scaled payoff matrix in exponent units.
    b: DMatrix<f64>,
    /// `lambda/w_s * c_k + ln w_k`.
    offset: DVector<f64>,
    a: DVector<f64>,
    wealth: f64,
    budget_norm: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Scaled {
    fn new(p: &Problem) -> Result<Self> {
        let n = p.num_instruments();
        let mut vars = Vec::with_capacity(2 * n);
        let bound = |b: Option<f64>| b.unwrap_or(f64::INFINITY);
        for j in 0..n {
            let (ask, bid) = (bound(p.upper[j]), bound(p.upper[n + j]));
            if p.mirrored[j] {
                if ask + bid > 0.0 {
                    vars.push(Var { col: j, mirror: Some(n + j), lo: -bid, hi: ask });
                }
            } else {
                if ask > 0.0 {
                    vars.push(Var { col: j, mirror: None, lo: 0.0, hi: ask });
                }
                if bid > 0.0 {
                    vars.push(Var { col: n + j, mirror: None, lo: 0.0, hi: bid });
                }
            }
        }
        let m = vars.len();
        let k = p.num_scenarios();
        let rho = p.risk_scale;
        let mut d = Vec::with_capacity(m);
        let mut b = DMatrix::zeros(k, m);
        for (i, v) in vars.iter().enumerate() {
            let col = p.payoff.column(v.col);
            let rms = col
                .iter()
                .zip(p.weights.iter())
                .map(|(x, w)| w * x * x)
                .sum::<f64>()
                .sqrt();
            let di = if rms > 0.0 { 1.0 / (rho * rms) } else { 1.0 };
            d.push(di);
            for r in 0..k {
                b[(r, i)] = rho * di * col[r];
            }
        }
        let offset = DVector::from_iterator(
            k,
            p.liability.iter().zip(p.weights.iter()).map(|(c, w)| rho * c + w.ln()),
        );
        let raw_a: Vec<f64> = vars.iter().zip(&d).map(|(v, di)| p.cost[v.col] * di).collect();
        let budget_norm = raw_a.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);
        let a = DVector::from_iterator(m, raw_a.iter().map(|x| x / budget_norm));
        let lo = vars.iter().zip(&d).map(|(v, di)| v.lo / di).collect();
        let hi = vars.iter().zip(&d).map(|(v, di)| v.hi / di).collect();
        Ok(Self {
            vars,
            d,
            b,
            offset,
            a,
            wealth: p.wealth / budget_norm,
            budget_norm,
            lo,
            hi,
        })
    }

    fn len(&self) -> usize {
        self.vars.len()
    }

    /// Log-sum-exp value and softmax weights at `y`.
    fn lse(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut u = &self.offset - &self.b * y;
        let max = u.max();
        u.apply(|e| *e = (*e - max).exp());
        let total = u.sum();
        u /= total;
        (max + total.ln(), u)
    }

    fn slack(&self, y: &DVector<f64>) -> f64 {
        self.wealth - self.a.dot(y)
    }

    fn barrier(&self, y: &DVector<f64>, mu: f64) -> f64 {
        let (g, _) = self.lse(y);
        let mut phi = g - mu * self.slack(y).ln();
        for i in 0..self.len() {
            if self.lo[i].is_finite() {
                phi -= mu * (y[i] - self.lo[i]).ln();
            }
            if self.hi[i].is_finite() {
                phi -= mu * (self.hi[i] - y[i]).ln();
            }
        }
        phi
    }

    /// Strictly interior starting point with budget slack to spare.
    fn start(&self, p: &Problem) -> Result<DVector<f64>> {
        let m = self.len();
        let mut y = DVector::zeros(m);
        for i in 0..m {
            let (lo, hi) = (self.lo[i], self.hi[i]);
            y[i] = if lo < 0.0 && hi > 0.0 {
                0.0
            } else if lo.is_finite() {
                lo + (BOUND_PUSH * lo.abs().max(1.0)).min(0.5 * (hi - lo))
            } else {
                hi - BOUND_PUSH * hi.abs().max(1.0)
            };
        }
        let target = (0.5 * self.wealth.abs()).max(BOUND_PUSH);
        let need = target - self.slack(&y);
        if need > 0.0 {
            // borrow cash to open up the budget
            let n = p.num_instruments();
            let cash = self
                .vars
                .iter()
                .position(|v| {
                    (v.col == n + p.cash_index && v.mirror.is_none())
                        || (v.col == p.cash_index && v.mirror.is_some())
                })
                .filter(|i| self.a[*i] != 0.0)
                .ok_or_else(|| Error::Solver("no strictly feasible starting point".into()))?;
            let moved = y[cash] - need / self.a[cash];
            if !(moved > self.lo[cash] && moved < self.hi[cash]) {
                return Err(Error::Solver("no strictly feasible starting point".into()));
            }
            y[cash] = moved;
        }
        Ok(y)
    }

    /// Expands a scaled iterate to the split decision vector.
    fn unscale(&self, y: &DVector<f64>, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; 2 * n];
        for (i, v) in self.vars.iter().enumerate() {
            let x = y[i] * self.d[i];
            match v.mirror {
                Some(short) if x < 0.0 => out[short] = -x,
                _ => out[v.col] = x.max(0.0),
            }
        }
        out
    }
}

struct Duals {
    zl: DVector<f64>,
    zu: DVector<f64>,
    eta: f64,
}

struct Slacks {
    sl: DVector<f64>,
    su: DVector<f64>,
    s: f64,
}

impl Slacks {
    fn at(sc: &Scaled, y: &DVector<f64>) -> Self {
        let m = sc.len();
        Self {
            sl: DVector::from_fn(m, |i, _| y[i] - sc.lo[i]),
            su: DVector::from_fn(m, |i, _| sc.hi[i] - y[i]),
            s: sc.slack(y),
        }
    }
}

/// Complementarity products of every finite bound and the budget row.
fn products<'a>(sl: &'a Slacks, z: &'a Duals) -> impl Iterator<Item = f64> + 'a {
    let lower = sl.sl.iter().zip(z.zl.iter()).filter(|(s, _)| s.is_finite()).map(|(s, z)| s * z);
    let upper = sl.su.iter().zip(z.zu.iter()).filter(|(s, _)| s.is_finite()).map(|(s, z)| s * z);
    lower.chain(upper).chain(std::iter::once(sl.s * z.eta))
}

fn errors(grad: &DVector<f64>, sl: &Slacks, z: &Duals, a: &DVector<f64>, mu: f64) -> f64 {
    let stationarity = (grad - &z.zl + &z.zu + a * z.eta).amax();
    products(sl, z).fold(stationarity, |acc, c| acc.max((c - mu).abs()))
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

pub(super) fn run(p: &Problem, opt: &SolveOptions) -> Result<RawSolution> {
    let sc = Scaled::new(p)?;
    let m = sc.len();
    let n = p.num_instruments();
    let mut y = sc.start(p)?;
    let mut mu = opt.mu_init;
    let mu_min = opt.tol / 10.0;

    let mut sl = Slacks::at(&sc, &y);
    let mut z = Duals {
        zl: sl.sl.map(|s| finite_or_zero(mu / s)),
        zu: sl.su.map(|s| finite_or_zero(mu / s)),
        eta: mu / sl.s,
    };

    let mut status = SolveStatus::IterationLimit;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;
    while iterations <= opt.max_iter {
        let (g, prob) = sc.lse(&y);
        if !g.is_finite() || prob.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver("non-finite objective during iteration".into()));
        }
        let q = sc.b.tr_mul(&prob);
        let grad = -&q;
        kkt = errors(&grad, &sl, &z, &sc.a, 0.0);
        if kkt <= opt.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if iterations == opt.max_iter {
            break;
        }
        iterations += 1;
        while mu > mu_min && errors(&grad, &sl, &z, &sc.a, mu) <= 10.0 * mu {
            mu = mu_min.max((0.2 * mu).min(mu.powf(1.5)));
        }

        // Newton matrix: Hessian of the log-sum-exp plus barrier terms.
        let mut weighted = sc.b.clone();
        for (r, pr) in prob.iter().enumerate() {
            weighted.row_mut(r).scale_mut(pr.sqrt());
        }
        let mut mat = weighted.tr_mul(&weighted);
        mat.ger(-1.0, &q, &q, 1.0);
        let mut rhs = -&grad;
        for i in 0..m {
            if sl.sl[i].is_finite() {
                mat[(i, i)] += z.zl[i] / sl.sl[i];
                rhs[i] += mu / sl.sl[i];
            }
            if sl.su[i].is_finite() {
                mat[(i, i)] += z.zu[i] / sl.su[i];
                rhs[i] -= mu / sl.su[i];
            }
        }
        mat.ger(z.eta / sl.s, &sc.a, &sc.a, 1.0);
        rhs -= &sc.a * (mu / sl.s);
        let dy = regularized_solve(mat, &rhs)?;

        let ds = -sc.a.dot(&dy);
        let dzl = DVector::from_fn(m, |i, _| {
            finite_or_zero(mu / sl.sl[i] - z.zl[i] - z.zl[i] / sl.sl[i] * dy[i])
        });
        let dzu = DVector::from_fn(m, |i, _| {
            finite_or_zero(mu / sl.su[i] - z.zu[i] + z.zu[i] / sl.su[i] * dy[i])
        });
        let deta = mu / sl.s - z.eta - z.eta / sl.s * ds;

        let tau = (1.0 - mu).max(0.99);
        let mut alpha_p: f64 = 1.0;
        for i in 0..m {
            if dy[i] < 0.0 && sl.sl[i].is_finite() {
                alpha_p = alpha_p.min(-tau * sl.sl[i] / dy[i]);
            }
            if dy[i] > 0.0 && sl.su[i].is_finite() {
                alpha_p = alpha_p.min(tau * sl.su[i] / dy[i]);
            }
        }
        if ds < 0.0 {
            alpha_p = alpha_p.min(-tau * sl.s / ds);
        }
        let mut alpha_d: f64 = 1.0;
        for i in 0..m {
            if dzl[i] < 0.0 {
                alpha_d = alpha_d.min(-tau * z.zl[i] / dzl[i]);
            }
            if dzu[i] < 0.0 {
                alpha_d = alpha_d.min(-tau * z.zu[i] / dzu[i]);
            }
        }
        if deta < 0.0 {
            alpha_d = alpha_d.min(-tau * z.eta / deta);
        }

        // Armijo backtracking on the barrier merit
        let phi0 = sc.barrier(&y, mu);
        let slope = -rhs.dot(&dy);
        let mut alpha = alpha_p;
        loop {
            let trial = &y + &dy * alpha;
            let phi = sc.barrier(&trial, mu);
            let roundoff = 1e-13 * (1.0 + phi0.abs());
            if phi <= phi0 + 1e-4 * alpha * slope || (phi - phi0).abs() <= roundoff || alpha < 1e-12 {
                y = trial;
                break;
            }
            alpha *= 0.5;
        }
        z.zl += &dzl * alpha_d;
        z.zu += &dzu * alpha_d;
        z.eta += deta * alpha_d;

        sl = Slacks::at(&sc, &y);
        if !(sl.s > 0.0) {
            return Err(Error::Solver("iterate left the budget interior".into()));
        }
        // keep duals within a factor of the central path
        let reset = |zi: f64, si: f64| {
            if si.is_finite() {
                zi.clamp(mu / (KAPPA_SIGMA * si), KAPPA_SIGMA * mu / si)
            } else {
                0.0
            }
        };
        for i in 0..m {
            z.zl[i] = reset(z.zl[i], sl.sl[i]);
            z.zu[i] = reset(z.zu[i], sl.su[i]);
        }
        z.eta = reset(z.eta, sl.s);
    }

    Ok(RawSolution {
        y: sc.unscale(&y, n),
        kkt_residual: kkt,
        duality_gap: products(&sl, &z).sum(),
        budget_multiplier: z.eta / sc.budget_norm,
        iterations,
        status,
    })
}

/// Cholesky solve with Levenberg regularization raised until it succeeds.
fn regularized_solve(mat: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let mut delta = 1e-10;
    while delta < 1e6 {
        let mut shifted = mat.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += delta;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let step = chol.solve(rhs);
            if step.iter().all(|x| x.is_finite()) {
                return Ok(step);
            }
        }
        delta *= 100.0;
    }
    Err(Error::Solver("Newton system could not be factored".into()))
}
