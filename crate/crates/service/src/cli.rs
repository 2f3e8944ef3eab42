//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 when the engine cannot
//! produce an answer (infeasible, unpriceable or numerical failure).

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use statichedge::instruments::MarketConfig;
use statichedge::pricing::ClaimSpec;
use statichedge::scenarios::parse_nu;
use statichedge::solver::{Liability, Preferences, SolveStatus};
use statichedge::sweeps::SweepSpec;
use statichedge::{Error, Result};

use crate::api::*;
use crate::config::SessionConfig;
use crate::engine::Engine;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "statichedge", version, about = "Static hedging and indifference pricing")]
pub struct Cli {
    #[command(flatten)]
    pub session: SessionArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Session flags; anything unset falls back to the bundled synthetic market.
#[derive(Debug, Clone, Default, Args)]
pub struct SessionArgs {
    /// Quote CSV; the synthetic book is used when absent.
    #[arg(long, global = true)]
    pub quotes: Option<PathBuf>,
    /// Market TOML with spot, maturity_years, lend_rate, borrow_rate and lot sizes.
    #[arg(long, global = true)]
    pub market: Option<PathBuf>,
    /// Spot level of the underlying.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub spot: Option<f64>,
    /// Years to maturity.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub maturity: Option<f64>,
    /// Continuously compounded lending rate.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lend: Option<f64>,
    /// Continuously compounded borrowing rate.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub borrow: Option<f64>,
    /// Location of the log-return.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Scale of the log-return.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// Degrees of freedom, or `inf` for a Gaussian view.
    #[arg(long, global = true)]
    pub nu: Option<String>,
    /// Risk aversion.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Initial cash; also resets the loss scale.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub wealth: Option<f64>,
    /// Bisection tolerance of indifference prices.
    #[arg(long = "tol-price", global = true, allow_hyphen_values = true)]
    pub tol_price: Option<f64>,
    /// Interior-point tolerance.
    #[arg(long = "tol-solver", global = true)]
    pub tol_solver: Option<f64>,
    /// Seed for Monte Carlo sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the JSON response instead of a text report.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal static hedge of the baseline position.
    Optimize {
        /// Claims owed at maturity, as a JSON list of claims or `@file`.
        #[arg(long)]
        liability: Option<String>,
    },
    /// Indifference buying and selling prices of a claim.
    Price {
        /// Claim JSON or `@file`.
        #[arg(long)]
        claim: String,
        /// Drop a quoted option identical to the claim from the hedging set.
        #[arg(long)]
        exclude_from_hedging: bool,
        /// Claims already owed, as a JSON list or `@file`.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Superhedging and subhedging costs of a claim.
    Bounds {
        /// Claim JSON or `@file`.
        #[arg(long)]
        claim: String,
        /// `LO,HI`; defaults to the session hedging interval.
        #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
        interval: Option<(f64, f64)>,
    },
    /// Sensitivity sweep written as CSV.
    Sweep {
        /// Sweep spec JSON or `@file`.
        #[arg(long)]
        spec: String,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the JSON service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

fn parse_interval(text: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(',').ok_or("expected LO,HI")?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

impl SessionArgs {
    pub fn to_config(&self) -> Result<SessionConfig> {
        let mut config = SessionConfig::default();
        let mut market: MarketConfig = match &self.market {
            Some(path) => MarketConfig::load(path)?,
            None => config.market.clone(),
        };
        market.spot = self.spot.unwrap_or(market.spot);
        market.maturity_years = self.maturity.unwrap_or(market.maturity_years);
        market.lend_rate = self.lend.unwrap_or(market.lend_rate);
        market.borrow_rate = self.borrow.unwrap_or(market.borrow_rate);
        config.view.spot = market.spot;
        config.market = market;
        config.quote_file = self.quotes.clone();
        config.view.mu = self.mu.unwrap_or(config.view.mu);
        config.view.sigma = self.sigma.unwrap_or(config.view.sigma);
        if let Some(nu) = &self.nu {
            config.view.nu = parse_nu(nu)?;
        }
        let lambda = self.lambda.unwrap_or(config.prefs.risk_aversion);
        config.prefs = match self.wealth {
            Some(w) => Preferences::new(w, lambda)?,
            None => Preferences { risk_aversion: lambda, ..config.prefs },
        };
        config.pricing.price_tol = self.tol_price.or(config.pricing.price_tol);
        config.pricing.solver_tol = self.tol_solver.unwrap_or(config.pricing.solver_tol);
        config.seed = self.seed.unwrap_or(config.seed);
        config.validate()?;
        Ok(config)
    }
}

/// Parses inline JSON, or the contents of the file after a leading `@`.
fn json_arg<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    let owned;
    let body = match text.strip_prefix('@') {
        Some(path) => {
            owned = std::fs::read_to_string(path)?;
            owned.as_str()
        }
        None => text,
    };
    let mut de = serde_json::Deserializer::from_str(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::Validation(if path == "." {
            format!("{what}: {}", e.inner())
        } else {
            format!("{what}.{path}: {}", e.inner())
        })
    })
}

fn liability_arg(text: Option<&String>) -> Result<Liability> {
    match text {
        Some(t) => Ok(Liability { claims: json_arg::<Vec<ClaimSpec>>("liability", t)? }),
        None => Ok(Liability::zero()),
    }
}

/// Exit code for an engine error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_INVALID
    } else {
        EXIT_ENGINE
    }
}

/// Parses `args` and runs the command, writing the report to `out` and
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = cli.session.to_config()?;
    let engine = Engine::new(config)?;
    let json = cli.session.json;
    match &cli.command {
        Command::Optimize { liability } => {
            let req = SolveRequest { liability: liability_arg(liability.as_ref())?, ..Default::default() };
            let r = engine.solve(&req)?;
            if json {
                emit_json(out, &r)?;
                return converged(&r);
            }
            write_positions(out, "optimal portfolio", &r.portfolio)?;
            writeln!(out, "cost             {}", r.cost)?;
            writeln!(out, "entropic_risk    {}", r.entropic_risk)?;
            writeln!(out, "expected_loss    {}", r.objective)?;
            writeln!(out, "budget_slack     {}", r.budget_slack)?;
            writeln!(out, "kkt_residual     {:e}", r.kkt_residual)?;
            writeln!(out, "status           {:?} after {} iterations", r.status, r.iterations)?;
            converged(&r)?;
        }
        Command::Price { claim, exclude_from_hedging, baseline } => {
            let req = PriceRequest {
                claim: json_arg("claim", claim)?,
                exclude_from_hedging: *exclude_from_hedging,
                price_tol: None,
                solver_tol: None,
                baseline: liability_arg(baseline.as_ref())?,
                overrides: Overrides::default(),
            };
            let r = engine.price(&req)?;
            if json {
                return emit_json(out, &r);
            }
            writeln!(out, "sell_price       {}", r.sell_price)?;
            writeln!(out, "buy_price        {}", r.buy_price)?;
            let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
            writeln!(out, "superhedge_cost  {}", show(r.superhedge_cost))?;
            writeln!(out, "subhedge_cost    {}", show(r.subhedge_cost))?;
            writeln!(out, "entropic_risk    {}", r.baseline_entropic_risk)?;
            writeln!(out, "kkt_residual     {:e}", r.max_kkt_residual)?;
            writeln!(out, "price_tol        {:e}", r.price_tol)?;
            write_positions(out, "hedge after selling", &r.hedge_sell)?;
            write_positions(out, "hedge after buying", &r.hedge_buy)?;
        }
        Command::Bounds { claim, interval } => {
            let req = BoundsRequest { claim: json_arg("claim", claim)?, interval: *interval };
            let r = engine.bounds(&req)?;
            if json {
                return emit_json(out, &r);
            }
            writeln!(out, "interval         [{}, {}]", r.interval.0, r.interval.1)?;
            writeln!(out, "superhedge_cost  {}", r.superhedge.cost)?;
            writeln!(out, "subhedge_cost    {}", r.subhedge.cost)?;
            write_positions(out, "superhedge", &r.superhedge.portfolio)?;
            write_positions(out, "subhedge", &r.subhedge.portfolio)?;
        }
        Command::Sweep { spec, out: path } => {
            let spec: SweepSpec = json_arg("spec", spec)?;
            let r = engine.sweep(&spec)?;
            match path {
                Some(p) => {
                    std::fs::write(p, &r.csv)?;
                    let failed = r.rows.iter().filter(|row| row.status.starts_with("error")).count();
                    writeln!(err, "wrote {} rows ({failed} failed) to {}", r.rows.len(), p.display())?;
                    writeln!(err, "config hash {}", r.metadata.config_hash)?;
                }
                None if json => return emit_json(out, &r),
                None => out.write_all(r.csv.as_bytes())?,
            }
        }
        Command::Serve { bind } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::server::serve(engine, *bind))?;
        }
    }
    Ok(())
}

/// The best iterate is still reported, but a run that hit the iteration limit
/// exits as a solver failure.
fn converged(r: &SolveResponse) -> Result<()> {
    match r.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::IterationLimit => Err(Error::Solver(format!(
            "no convergence after {} iterations (kkt residual {:e})",
            r.iterations, r.kkt_residual
        ))),
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn write_positions(out: &mut dyn Write, title: &str, rows: &[PositionRow]) -> Result<()> {
    writeln!(out, "{title}:")?;
    if rows.is_empty() {
        writeln!(out, "  (no positions)")?;
    }
    writeln!(out, "  {:<28} {:>16}  side", "instrument", "net_units").map_err(Error::from)?;
    for row in rows {
        writeln!(out, "  {:<28} {:>16.6}  {}", row.instrument, row.net_units, row.side)?;
    }
    Ok(())
}
