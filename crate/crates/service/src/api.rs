//! Request and response bodies shared by the HTTP service and the CLI.
//!
//! Field names are snake_case; prices are in the units of the quote file and
//! every response echoes the tolerances it was computed with.

use serde::{Deserialize, Deserializer, Serialize};
use statichedge::bounds::HedgeBoundResult;
use statichedge::pricing::ClaimSpec;
use statichedge::scenarios::parse_nu;
use statichedge::solver::{Liability, SolveStatus, SplitPortfolio};
use statichedge::sweeps::{PayoffDistribution, SweepMetadata, SweepRow};

/// Positions below this size are left out of portfolio tables.
pub const DISPLAY_THRESHOLD: f64 = 1e-6;

/// Optional per-request changes to the session's view and preferences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Degrees of freedom, a number or `"inf"`.
    #[serde(default, deserialize_with = "de_opt_nu", skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth: Option<f64>,
}

fn de_opt_nu<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Num(v)) => Ok(Some(v)),
        Some(Raw::Text(t)) => parse_nu(&t).map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub instrument: String,
    pub net_units: f64,
    /// `long` or `short`.
    pub side: String,
}

/// Table of the nonnegligible net positions of `portfolio`.
pub fn position_rows(ids: &[String], portfolio: &SplitPortfolio) -> Vec<PositionRow> {
    ids.iter()
        .zip(portfolio.net())
        .filter(|(_, units)| units.abs() > DISPLAY_THRESHOLD)
        .map(|(id, units)| PositionRow {
            instrument: id.clone(),
            net_units: units,
            side: if units > 0.0 { "long" } else { "short" }.into(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentRow {
    pub id: String,
    /// `cash`, `forward`, `call` or `put`.
    pub kind: String,
    pub strike: Option<f64>,
    pub bid: f64,
    pub ask: f64,
    pub bid_depth: Option<f64>,
    pub ask_depth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSummary {
    pub spot: f64,
    pub maturity_years: f64,
    pub lend_rate: f64,
    pub borrow_rate: f64,
    pub instrument_count: usize,
    pub option_count: usize,
    pub strike_range: Option<(f64, f64)>,
    /// Option ask minus bid, in price units.
    pub option_spread: Option<SpreadStats>,
    /// Option spread divided by mid.
    pub option_relative_spread: Option<SpreadStats>,
    pub instruments: Vec<InstrumentRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    /// Claims owed at maturity before any trade.
    #[serde(default)]
    pub liability: Liability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
    #[serde(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResponse {
    pub portfolio: Vec<PositionRow>,
    pub instrument_ids: Vec<String>,
    pub net_units: Vec<f64>,
    pub cost: f64,
    pub objective: f64,
    pub entropic_risk: f64,
    pub budget_slack: f64,
    pub budget_multiplier: f64,
    pub kkt_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub solver_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRequest {
    pub claim: ClaimSpec,
    #[serde(default)]
    pub exclude_from_hedging: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
    /// Claims already owed before the trade.
    #[serde(default)]
    pub baseline: Liability,
    #[serde(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResponse {
    pub sell_price: f64,
    pub buy_price: f64,
    pub superhedge_cost: Option<f64>,
    pub subhedge_cost: Option<f64>,
    /// Portfolio change after selling the claim at `sell_price`.
    pub hedge_sell: Vec<PositionRow>,
    /// Portfolio change after buying the claim at `buy_price`.
    pub hedge_buy: Vec<PositionRow>,
    pub baseline_portfolio: Vec<PositionRow>,
    pub baseline_entropic_risk: f64,
    pub bracket_sell: (f64, f64),
    pub bracket_buy: (f64, f64),
    pub excluded_instrument: Option<String>,
    pub iterations: usize,
    pub max_kkt_residual: f64,
    pub price_tol: f64,
    pub solver_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRequest {
    pub claim: ClaimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSide {
    pub cost: f64,
    pub portfolio: Vec<PositionRow>,
    pub binding_points: Vec<f64>,
    pub verification_margin: f64,
}

impl BoundSide {
    pub fn new(ids: &[String], r: &HedgeBoundResult) -> Self {
        Self {
            cost: r.cost,
            portfolio: position_rows(ids, &r.portfolio),
            binding_points: r.binding_points.clone(),
            verification_margin: r.verification_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsResponse {
    pub superhedge: BoundSide,
    pub subhedge: BoundSide,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub parameter_names: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
    /// The rows in the CSV layout written by the CLI.
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionInput {
    pub instrument: String,
    pub units: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRequest {
    /// Portfolio to evaluate; the optimal one for `liability` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portfolio: Option<Vec<PositionInput>>,
    #[serde(default)]
    pub liability: Liability,
    #[serde(default = "default_samples")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub include_samples: bool,
    #[serde(flatten)]
    pub overrides: Overrides,
}

fn default_samples() -> usize {
    100_000
}

fn default_bins() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionResponse {
    pub portfolio: Vec<PositionRow>,
    pub seed: u64,
    pub distribution: PayoffDistribution,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// `validation`, `infeasible`, `unpriceable` or `solver`.
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<(f64, f64)>>,
}
