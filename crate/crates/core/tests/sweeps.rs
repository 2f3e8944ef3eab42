mod common;

use statichedge::fixture;
use statichedge::pricing::{price, ClaimSpec, PricingOptions};
use statichedge::scenarios::{GridSpec, ViewModel};
use statichedge::solver::{assemble, solve, Liability, Preferences};
use statichedge::sweeps::{payoff_distribution, run_sweep, write_csv, SweepContext, SweepParameter, SweepSpec, SweepTarget};

fn coarse_spec() -> GridSpec {
    GridSpec { panels: 12, nodes_per_panel: 8, ..fixture::grid_spec() }
}

fn context() -> SweepContext {
    SweepContext {
        book: common::trimmed_book(),
        view: fixture::view(),
        grid: coarse_spec(),
        prefs: fixture::preferences(),
        baseline: Liability::zero(),
        options: PricingOptions { price_tol: Some(1e-3), ..PricingOptions::default() },
    }
}

fn csv_of(ctx: &SweepContext, spec: &SweepSpec) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(&run_sweep(ctx, spec).unwrap(), &mut out).unwrap();
    out
}

#[test]
fn repeated_sweeps_write_identical_csv() {
    let spec = SweepSpec {
        parameter: SweepParameter::Sigma { values: vec![0.04, 0.05, 0.06] },
        target: SweepTarget::Claim(ClaimSpec::Digital { strike: 2050.0, amount: 100.0 }),
        workers: Some(3),
    };
    let ctx = context();
    let first = csv_of(&ctx, &spec);
    assert_eq!(first, csv_of(&ctx, &spec));
    let serial = SweepSpec { workers: Some(1), ..spec };
    assert_eq!(first, csv_of(&ctx, &serial));
}

#[test]
fn single_point_sweep_equals_direct_pricing() {
    let ctx = context();
    let claim = ClaimSpec::Call { strike: 2000.0 };
    for parameter in [
        SweepParameter::Multiplier { values: vec![3.0] },
        SweepParameter::Lambda { values: vec![2.0] },
    ] {
        let spec = SweepSpec { parameter, target: SweepTarget::Claim(claim.clone()), workers: Some(1) };
        let row = &run_sweep(&ctx, &spec).unwrap().rows[0];
        let m = row.params[0];
        let target = if matches!(spec.parameter, SweepParameter::Multiplier { .. }) { claim.clone().scaled(m) } else { claim.clone() };
        let grid = statichedge::scenarios::build_grid_with(&ctx.view, &ctx.grid).unwrap();
        let direct = price(&ctx.book, &grid, &ctx.prefs, &ctx.baseline, &target, &ctx.options).unwrap();
        assert!((row.sell_price.unwrap() - direct.sell_price).abs() <= 1e-3);
        assert!((row.buy_price.unwrap() - direct.buy_price).abs() <= 1e-3);
    }
}

#[test]
fn sigma_sweep_has_no_isolated_jumps() {
    let values: Vec<f64> = (0..11).map(|i| 0.03 + 0.005 * i as f64).collect();
    let spec = SweepSpec {
        parameter: SweepParameter::Sigma { values },
        target: SweepTarget::Claim(ClaimSpec::Call { strike: 2000.0 }),
        workers: None,
    };
    let rows = run_sweep(&context(), &spec).unwrap().rows;
    let sells: Vec<f64> = rows.iter().map(|r| r.sell_price.unwrap()).collect();
    let gaps: Vec<f64> = sells.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for j in 0..gaps.len() {
        let left = if j > 0 { gaps[j - 1] } else { 0.0 };
        let right = gaps.get(j + 1).copied().unwrap_or(0.0);
        assert!(gaps[j] <= 10.0 * left.max(right) + 2e-3, "gap {j}: {gaps:?}");
    }
}

#[test]
fn entropic_risk_surface_is_finite() {
    let spec = SweepSpec {
        parameter: SweepParameter::MuSigmaGrid {
            mu: vec![-0.05, -0.025, 0.0, 0.025, 0.05],
            sigma: vec![0.04, 0.05, 0.06, 0.07, 0.08],
        },
        target: SweepTarget::PortfolioRisk,
        workers: None,
    };
    let mut ctx = context();
    ctx.view.nu = f64::INFINITY;
    let rows = run_sweep(&ctx, &spec).unwrap().rows;
    assert_eq!(rows.len(), 25);
    let risk: Vec<f64> = rows.iter().map(|r| r.entropic_risk.unwrap()).collect();
    assert!(risk.iter().all(|v| v.is_finite()));
    // concavity along each axis is reported, not enforced
    let mut bent = 0;
    for i in 0..5 {
        for j in 1..4 {
            let along_sigma = risk[5 * i + j - 1] - 2.0 * risk[5 * i + j] + risk[5 * i + j + 1];
            let along_mu = risk[5 * (j - 1) + i] - 2.0 * risk[5 * j + i] + risk[5 * (j + 1) + i];
            bent += (along_sigma > 1e-6) as usize + (along_mu > 1e-6) as usize;
        }
    }
    println!("entropic risk surface: {bent} of 30 second differences convex");
}

#[test]
fn risk_aversion_lifts_the_low_quantile() {
    let book = fixture::book();
    let grid = common::fixture_grid();
    let view: ViewModel = fixture::view();
    let p01 = |lambda: f64| {
        let prefs = Preferences::new(100_000.0, lambda).unwrap();
        let r = solve(&assemble(&book, &grid, &prefs, &Liability::zero()).unwrap(), 1e-9).unwrap();
        payoff_distribution(&book, &r.portfolio, &Liability::zero(), &view, 200_000, 7, 40, false)
            .unwrap()
            .quantile(0.01)
            .unwrap()
    };
    let (low, high) = (p01(1.0), p01(6.0));
    assert!(high > low, "{high} <= {low}");
}
