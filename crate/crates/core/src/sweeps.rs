//! Sensitivity sweeps and payoff distributions.
//!
//! Each sweep point rebuilds only the component its parameter touches and is
//! evaluated on a bounded rayon pool; rows come back in input order, so the
//! CSV output depends only on the spec.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::instruments::{Num, QuoteBook};
use crate::pricing::{self, ClaimSpec, Pricer, PricingOptions};
use crate::scenarios::{self, build_grid_with, GridSpec, ViewModel};
use crate::solver::{self, Liability, Preferences, SplitPortfolio};

/// Everything a sweep holds fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepContext {
    pub book: QuoteBook,
    pub view: ViewModel,
    pub grid: GridSpec,
    pub prefs: Preferences,
    #[serde(default)]
    pub baseline: Liability,
    #[serde(default)]
    pub options: PricingOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case")]
pub enum SweepParameter {
    Sigma { values: Vec<f64> },
    Lambda { values: Vec<f64> },
    /// Units of the target claim already owed before the trade.
    InitialPositionUnits { values: Vec<f64> },
    Multiplier { values: Vec<f64> },
    MuSigmaGrid { mu: Vec<f64>, sigma: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    Claim(ClaimSpec),
    PortfolioRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(flatten)]
    pub parameter: SweepParameter,
    pub target: SweepTarget,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: Vec<f64>,
    pub sell_price: Option<f64>,
    pub buy_price: Option<f64>,
    pub entropic_risk: Option<f64>,
    pub kkt_residual: Option<f64>,
    /// `ok`, `iteration_limit`, or `error: ...`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub timestamp: String,
    /// SHA-256 of the canonical JSON of context and spec.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter_names: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

impl SweepParameter {
    fn names(&self) -> Vec<String> {
        let one = |s: &str| vec![s.to_string()];
        match self {
            SweepParameter::Sigma { .. } => one("sigma"),
            SweepParameter::Lambda { .. } => one("lambda"),
            SweepParameter::InitialPositionUnits { .. } => one("initial_position_units"),
            SweepParameter::Multiplier { .. } => one("multiplier"),
            SweepParameter::MuSigmaGrid { .. } => vec!["mu".into(), "sigma".into()],
        }
    }

    /// Parameter tuples in output order (mu-major for the surface).
    fn points(&self) -> Vec<Vec<f64>> {
        match self {
            SweepParameter::Sigma { values }
            | SweepParameter::Lambda { values }
            | SweepParameter::InitialPositionUnits { values }
            | SweepParameter::Multiplier { values } => values.iter().map(|v| vec![*v]).collect(),
            SweepParameter::MuSigmaGrid { mu, sigma } => mu
                .iter()
                .flat_map(|m| sigma.iter().map(move |s| vec![*m, *s]))
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |values: &[f64], sorted: bool| -> Result<()> {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("sweep values must be nonempty and finite".into()));
            }
            if sorted && values.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Validation("sweep values must be sorted".into()));
            }
            Ok(())
        };
        match self {
            SweepParameter::Sigma { values }
            | SweepParameter::Lambda { values }
            | SweepParameter::InitialPositionUnits { values }
            | SweepParameter::Multiplier { values } => check(values, true),
            SweepParameter::MuSigmaGrid { mu, sigma } => {
                check(mu, false)?;
                check(sigma, false)
            }
        }
    }
}

/// Hex SHA-256 of the sweep configuration.
pub fn config_hash(ctx: &SweepContext, spec: &SweepSpec) -> Result<String> {
    let text = serde_json::to_string(&(ctx, spec))
        .map_err(|e| Error::Validation(format!("cannot serialize sweep: {e}")))?;
    Ok(Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn run_sweep(ctx: &SweepContext, spec: &SweepSpec) -> Result<SweepResult> {
    spec.parameter.validate()?;
    ctx.view.validate()?;
    ctx.grid.validate()?;
    ctx.prefs.validate()?;
    ctx.baseline.validate()?;
    let claim = match &spec.target {
        SweepTarget::Claim(c) => {
            c.validate()?;
            Some(c)
        }
        SweepTarget::PortfolioRisk => None,
    };
    if claim.is_none()
        && matches!(
            spec.parameter,
            SweepParameter::InitialPositionUnits { .. } | SweepParameter::Multiplier { .. }
        )
    {
        return Err(Error::Validation("this sweep parameter needs a claim target".into()));
    }
    let workers = spec
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, 64);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Solver(format!("worker pool: {e}")))?;

    // the multiplier sweep shares one baseline across all points
    let shared = match (&spec.parameter, claim) {
        (SweepParameter::Multiplier { .. }, Some(c)) => {
            let grid = build_grid_with(&ctx.view, &ctx.grid)?;
            let book = pricing::hedging_book(&ctx.book, c, &ctx.options)?;
            Some(Pricer::new(&book, &grid, &ctx.prefs, &ctx.baseline, ctx.options.solver_tol)?)
        }
        _ => None,
    };

    let points = spec.parameter.points();
    let rows = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let outcome = evaluate(ctx, &spec.parameter, claim, shared.as_ref(), p);
                into_row(p.clone(), outcome)
            })
            .collect()
    });
    Ok(SweepResult {
        parameter_names: spec.parameter.names(),
        rows,
        metadata: SweepMetadata {
            timestamp: chrono::Utc::now().to_rfc3339(),
            config_hash: config_hash(ctx, spec)?,
        },
    })
}

struct Point {
    sell: Option<f64>,
    buy: Option<f64>,
    risk: f64,
    kkt: f64,
    optimal: bool,
}

fn evaluate(
    ctx: &SweepContext,
    parameter: &SweepParameter,
    claim: Option<&ClaimSpec>,
    shared: Option<&Pricer>,
    p: &[f64],
) -> Result<Point> {
    let mut view = ctx.view;
    let mut prefs = ctx.prefs;
    let mut baseline = ctx.baseline.clone();
    let mut claim = claim.cloned();
    match parameter {
        SweepParameter::Sigma { .. } => view.sigma = p[0],
        SweepParameter::Lambda { .. } => prefs.risk_aversion = p[0],
        SweepParameter::InitialPositionUnits { .. } => {
            if let Some(c) = &claim {
                baseline = baseline.plus(c.clone().scaled(p[0]));
            }
        }
        SweepParameter::Multiplier { .. } => claim = claim.map(|c| c.scaled(p[0])),
        SweepParameter::MuSigmaGrid { .. } => {
            view.mu = p[0];
            view.sigma = p[1];
        }
    }
    view.validate()?;
    prefs.validate()?;

    let Some(claim) = claim else {
        let grid = build_grid_with(&view, &ctx.grid)?;
        let problem = solver::assemble(&ctx.book, &grid, &prefs, &baseline)?;
        let r = solver::solve(&problem, ctx.options.solver_tol)?;
        return Ok(Point {
            sell: None,
            buy: None,
            risk: r.entropic_risk,
            kkt: r.kkt_residual,
            optimal: r.status == solver::SolveStatus::Optimal,
        });
    };
    let result = match shared {
        Some(pricer) => pricing::price_with(pricer, &claim, &ctx.options)?,
        None => {
            let grid = build_grid_with(&view, &ctx.grid)?;
            pricing::price(&ctx.book, &grid, &prefs, &baseline, &claim, &ctx.options)?
        }
    };
    Ok(Point {
        sell: Some(result.sell_price),
        buy: Some(result.buy_price),
        risk: result.baseline_entropic_risk,
        kkt: result.max_kkt_residual,
        optimal: result.max_kkt_residual <= ctx.options.solver_tol,
    })
}

fn into_row(params: Vec<f64>, outcome: Result<Point>) -> SweepRow {
    match outcome {
        Ok(p) => SweepRow {
            params,
            sell_price: p.sell,
            buy_price: p.buy,
            entropic_risk: Some(p.risk),
            kkt_residual: Some(p.kkt),
            status: if p.optimal { "ok" } else { "iteration_limit" }.into(),
        },
        Err(e) => SweepRow {
            params,
            sell_price: None,
            buy_price: None,
            entropic_risk: None,
            kkt_residual: None,
            status: format!("error: {e}"),
        },
    }
}

/// Writes `param_1[,param_2],sell_price,buy_price,entropic_risk,status` with
/// shortest round-trip floats; missing values are empty fields.
pub fn write_csv(result: &SweepResult, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut header = result.parameter_names.clone();
    header.extend(["sell_price", "buy_price", "entropic_risk", "status"].map(String::from));
    wtr.write_record(&header).map_err(io)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| Num(x).to_string());
    for row in &result.rows {
        let mut record: Vec<String> = row.params.iter().map(|v| Num(*v).to_string()).collect();
        record.extend([opt(row.sell_price), opt(row.buy_price), opt(row.entropic_risk), row.status.clone()]);
        wtr.write_record(&record).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffDistribution {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Quantiles at 1%, 5%, 50%, 95% and 99%.
    pub quantiles: Vec<(f64, f64)>,
    pub bins: Vec<Bin>,
    /// Raw samples, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl PayoffDistribution {
    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.quantiles.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.01, 0.05, 0.5, 0.95, 0.99];

/// Monte Carlo law of the net terminal payoff `portfolio - liability`.
#[allow(clippy::too_many_arguments)]
pub fn payoff_distribution(
    book: &QuoteBook,
    portfolio: &SplitPortfolio,
    liability: &Liability,
    model: &ViewModel,
    n: usize,
    seed: u64,
    bins: usize,
    keep_samples: bool,
) -> Result<PayoffDistribution> {
    if n < 10_000 {
        return Err(Error::Validation(format!("need at least 10000 samples, got {n}")));
    }
    if bins == 0 {
        return Err(Error::Validation("need at least one bin".into()));
    }
    if portfolio.len() != book.len() {
        return Err(Error::Validation("portfolio does not match the book".into()));
    }
    let levels = scenarios::sample(model, n, seed)?;
    let values: Vec<f64> = levels
        .iter()
        .map(|x| portfolio.payoff(book, *x) - liability.payoff(*x))
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[n - 1]);
    let quantiles = QUANTILE_LEVELS
        .iter()
        .map(|p| (*p, sorted[((n - 1) as f64 * p).floor() as usize]))
        .collect();
    let hist = if max > min {
        let width = (max - min) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in &values {
            let i = (((v - min) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| Bin {
                lo: min + width * i as f64,
                hi: min + width * (i + 1) as f64,
                count,
            })
            .collect()
    } else {
        vec![Bin { lo: min, hi: max, count: n }]
    };
    Ok(PayoffDistribution {
        n,
        mean,
        std_dev: var.sqrt(),
        min,
        max,
        quantiles,
        bins: hist,
        samples: keep_samples.then_some(values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::{Instrument, Quote, RatePair};

    fn cash_book() -> QuoteBook {
        let rates = RatePair::new(0.03, 0.0043).unwrap();
        QuoteBook::new(vec![Instrument::cash(rates)], vec![Quote::cash()], 2056.32, 0.19).unwrap()
    }

    fn context() -> SweepContext {
        SweepContext {
            book: cash_book(),
            view: ViewModel::new(0.0, 0.0554, 4.8355, 2056.32).unwrap(),
            grid: GridSpec { panels: 8, nodes_per_panel: 6, ..GridSpec::default() },
            prefs: Preferences::new(100_000.0, 2.0).unwrap(),
            baseline: Liability::zero(),
            options: PricingOptions::default(),
        }
    }

    #[test]
    fn zero_portfolio_is_degenerate() {
        let d = payoff_distribution(
            &cash_book(),
            &SplitPortfolio::zero(1),
            &Liability::zero(),
            &context().view,
            10_000,
            1,
            20,
            false,
        )
        .unwrap();
        assert_eq!((d.min, d.max, d.mean, d.std_dev), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(d.bins.len(), 1);
    }

    #[test]
    fn unit_cash_pays_growth() {
        let p = SplitPortfolio { long: vec![1.0], short: vec![0.0] };
        let d = payoff_distribution(&cash_book(), &p, &Liability::zero(), &context().view, 1_000_000, 9, 10, true)
            .unwrap();
        let g = (0.0043f64 * 0.19).exp();
        assert!(d.samples.unwrap().iter().all(|v| *v == g));
        assert!(payoff_distribution(&cash_book(), &p, &Liability::zero(), &context().view, 100, 9, 10, false).is_err());
    }

    #[test]
    fn rows_keep_input_order_and_format() {
        let spec = SweepSpec {
            parameter: SweepParameter::Lambda { values: vec![1.0, 2.0, 3.0] },
            target: SweepTarget::PortfolioRisk,
            workers: Some(3),
        };
        let r = run_sweep(&context(), &spec).unwrap();
        let g = (0.0043f64 * 0.19).exp();
        for (row, lam) in r.rows.iter().zip([1.0, 2.0, 3.0]) {
            assert_eq!(row.params, vec![lam]);
            assert!((row.entropic_risk.unwrap() + lam * g).abs() < 1e-7);
        }
        let mut out = Vec::new();
        write_csv(&r, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("lambda,sell_price,buy_price,entropic_risk,status\n1,,,"));
        assert_eq!(r.metadata.config_hash.len(), 64);
    }

    #[test]
    fn failed_points_stay_in_place() {
        let spec = SweepSpec {
            parameter: SweepParameter::Sigma { values: vec![-0.1, 0.05] },
            target: SweepTarget::PortfolioRisk,
            workers: Some(1),
        };
        let r = run_sweep(&context(), &spec).unwrap();
        assert!(r.rows[0].status.starts_with("error"));
        assert_eq!(r.rows[1].status, "ok");
    }

    #[test]
    fn spec_json_shape() {
        let spec: SweepSpec = serde_json::from_str(
            r#"{"parameter":"mu_sigma_grid","mu":[0.0],"sigma":[0.05,0.06],"target":"portfolio_risk"}"#,
        )
        .unwrap();
        assert_eq!(spec.parameter.points(), vec![vec![0.0, 0.05], vec![0.0, 0.06]]);
        let spec: SweepSpec = serde_json::from_str(
            r#"{"parameter":"multiplier","values":[1,2],"target":{"claim":{"kind":"call","strike":2000}}}"#,
        )
        .unwrap();
        assert!(matches!(spec.target, SweepTarget::Claim(ClaimSpec::Call { .. })));
        let bad = serde_json::from_str::<SweepSpec>(r#"{"parameter":"lambda","values":[2,1],"target":"portfolio_risk"}"#)
            .unwrap();
        assert!(run_sweep(&context(), &bad).is_err());
    }
}
