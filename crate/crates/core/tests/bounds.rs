mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statichedge::bounds::{subhedge, superhedge, superhedge_on_points};
use statichedge::fixture::{self, HEDGE_INTERVAL};
use statichedge::instruments::QuoteBook;
use statichedge::pricing::ClaimSpec;

/// Minimum of `cost . y` over `A y >= b, 0 <= y <= u` by visiting every
/// basic solution of the constraint system.
fn vertex_minimum(cost: &[f64], a: &[Vec<f64>], b: &[f64], upper: &[Option<f64>]) -> f64 {
    let d = cost.len();
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        rows.push((e.clone(), 0.0));
        if let Some(u) = upper[i] {
            rows.push((e.iter().map(|v| -v).collect(), -u));
        }
    }
    let m = rows.len();
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..d).collect();
    loop {
        let g = DMatrix::from_fn(d, d, |r, c| rows[pick[r]].0[c]);
        let h = DVector::from_fn(d, |r, _| rows[pick[r]].1);
        if let Some(y) = g.lu().solve(&h) {
            let feasible = rows.iter().all(|(row, rhs)| {
                let lhs: f64 = row.iter().zip(y.iter()).map(|(p, q)| p * q).sum();
                lhs >= rhs - 1e-9 * (1.0 + rhs.abs())
            });
            if feasible && y.iter().all(|v| v.is_finite()) {
                best = best.min(cost.iter().zip(y.iter()).map(|(p, q)| p * q).sum());
            }
        }
        // next combination in lexicographic order
        let mut i = d;
        while i > 0 && pick[i - 1] == m - d + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        pick[i - 1] += 1;
        for j in i..d {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

fn lp_data(book: &QuoteBook, claim: &ClaimSpec, points: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>, Vec<Option<f64>>) {
    let t = book.maturity();
    let cost: Vec<f64> = book
        .quotes()
        .iter()
        .map(|q| q.ask_price)
        .chain(book.quotes().iter().map(|q| -q.bid_price))
        .collect();
    let upper = book
        .quotes()
        .iter()
        .map(|q| q.ask_depth)
        .chain(book.quotes().iter().map(|q| q.bid_depth))
        .collect();
    let a = points
        .iter()
        .map(|x| {
            let long = book.instruments().iter().map(|i| i.payoff_unit_long(*x, t).unwrap());
            let short = book.instruments().iter().map(|i| i.payoff_unit_short(*x, t).unwrap());
            long.chain(short).collect()
        })
        .collect();
    let b = points.iter().map(|x| claim.payoff(*x)).collect();
    (cost, a, b, upper)
}

fn ladder() -> impl Strategy<Value = (char, f64)> {
    (any::<bool>(), 0usize..41).prop_map(|(call, i)| (if call { 'C' } else { 'P' }, 1850.0 + 10.0 * i as f64))
}

fn claim_strategy() -> impl Strategy<Value = ClaimSpec> {
    prop_oneof![
        (1800.0f64..2300.0).prop_map(|strike| ClaimSpec::Call { strike }),
        (1800.0f64..2300.0).prop_map(|strike| ClaimSpec::Put { strike }),
        (1800.0f64..2300.0, 1.0f64..100.0).prop_map(|(strike, amount)| ClaimSpec::Digital { strike, amount }),
        (1800.0f64..2300.0).prop_map(|strike| ClaimSpec::QuadraticForward { strike }.scaled(1e-3)),
        proptest::collection::vec(-50.0f64..50.0, 4).prop_map(|values| ClaimSpec::PiecewiseLinear {
            breakpoints: vec![1900.0, 2000.0, 2100.0, 2200.0],
            values,
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lp_matches_vertex_enumeration(
        options in proptest::collection::vec(ladder(), 1..=3),
        depth in proptest::option::of(0.5f64..5.0),
        claim in claim_strategy(),
        sign in prop_oneof![Just(1.0), Just(-1.0)],
    ) {
        let mut options = options;
        options.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
        options.dedup();
        let book = common::small_book(&options, depth);
        let claim = claim.scaled(sign);
        // endpoints and strikes: dominance there is dominance on the interval
        let mut points = vec![HEDGE_INTERVAL.0, HEDGE_INTERVAL.1];
        points.extend(book.strikes());
        for filler in [2005.0, 2105.0, 2205.0] {
            if points.len() < 5 {
                points.push(filler);
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        let lp = superhedge_on_points(&book, &claim, &points).unwrap().cost;
        let (cost, a, b, upper) = lp_data(&book, &claim, &points);
        let exact = vertex_minimum(&cost, &a, &b, &upper);
        prop_assert!((lp - exact).abs() <= 1e-8, "lp {lp} vs vertices {exact}");
    }

    #[test]
    fn sub_and_super_are_mirror_images(claim in claim_strategy()) {
        let book = common::small_book(&[('C', 2000.0), ('P', 2000.0), ('C', 2100.0)], Some(50.0));
        let sup = superhedge(&book, &claim, HEDGE_INTERVAL).unwrap();
        let sub = subhedge(&book, &claim, HEDGE_INTERVAL).unwrap();
        let neg_sup = superhedge(&book, &claim.negated(), HEDGE_INTERVAL).unwrap();
        prop_assert_eq!(sub.cost, -neg_sup.cost);
        prop_assert!(sub.cost <= sup.cost + 1e-9 * (1.0 + sup.cost.abs()));
    }

    #[test]
    fn deeper_quotes_tighten_both_bounds(claim in claim_strategy(), factor in 1.0f64..20.0) {
        let book = common::small_book(&[('C', 1950.0), ('C', 2050.0), ('P', 2050.0), ('P', 2150.0)], Some(0.3));
        let deep = book.with_depth_scale(factor);
        let tol = |v: f64| 1e-8 * (1.0 + v.abs());
        let (sup, sup_deep) = (
            superhedge(&book, &claim, HEDGE_INTERVAL).unwrap().cost,
            superhedge(&deep, &claim, HEDGE_INTERVAL).unwrap().cost,
        );
        let (sub, sub_deep) = (
            subhedge(&book, &claim, HEDGE_INTERVAL).unwrap().cost,
            subhedge(&deep, &claim, HEDGE_INTERVAL).unwrap().cost,
        );
        prop_assert!(sup_deep <= sup + tol(sup));
        prop_assert!(sub_deep >= sub - tol(sub));
    }
}

#[test]
fn per_unit_superhedge_cost_rises_with_size() {
    let book = fixture::book().with_depth_scale(0.02);
    let call = ClaimSpec::Call { strike: 2050.0 };
    let per_unit: Vec<f64> = [1.0, 100.0, 200.0, 400.0, 1000.0]
        .iter()
        .map(|m| superhedge(&book, &call.clone().scaled(*m), HEDGE_INTERVAL).unwrap().cost / m)
        .collect();
    assert!(per_unit.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0]), "{per_unit:?}");
    // depth of 200 units binds beyond that size
    assert!(per_unit[4] > per_unit[0] + 1e-6, "{per_unit:?}");
}

#[test]
fn quoted_call_never_costs_more_than_its_ask() {
    let book = fixture::book();
    for k in [1900.0, 2050.0, 2200.0] {
        let j = book.index_of(&format!("C{k}")).unwrap();
        let sup = superhedge(&book, &ClaimSpec::Call { strike: k }, HEDGE_INTERVAL).unwrap();
        assert!(sup.cost <= book.quotes()[j].ask_price + 1e-9);
    }
}
