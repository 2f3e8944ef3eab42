mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use statichedge::instruments::{Instrument, InstrumentKind, Quote, QuoteBook, RatePair, CASH_ID};
use statichedge::Error;
use statichedge_service::api::PriceRequest;
use statichedge_service::server::{classify, router, router_with_cache};
use statichedge_service::{Engine, SessionConfig};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn market_summary_reports_spreads() {
    let app = router(common::fixture_engine());
    let (status, body) = call(&app, "GET", "/market", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["instrument_count"], 84);
    assert_eq!(body["option_count"], 82);
    let rel = body["option_relative_spread"]["mean"].as_f64().unwrap();
    assert!((rel - 0.01).abs() < 1e-12);
    assert_eq!(body["instruments"].as_array().unwrap().len(), 84);
}

#[tokio::test]
async fn digital_price_has_prices_and_hedges() {
    let app = router(common::fixture_engine());
    let claim = json!({"claim": {"kind": "digital", "strike": 2050, "amount": 10000}});
    let (status, body) = call(&app, "POST", "/price", Some(claim)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (sell, buy) = (body["sell_price"].as_f64().unwrap(), body["buy_price"].as_f64().unwrap());
    assert!(buy <= sell);
    assert!(body["hedge_sell"].as_array().is_some_and(|h| !h.is_empty()));
    assert!(body["hedge_buy"].as_array().is_some_and(|h| !h.is_empty()));
    assert!(body["price_tol"].as_f64().unwrap() > 0.0);
    assert!(body["solver_tol"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn malformed_requests_are_rejected_with_field_paths() {
    let app = router(common::mini_engine());
    let (status, body) = call(&app, "POST", "/price", Some(json!({"claim": {"kind": "swaption", "strike": 1}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "validation");
    assert!(body["message"].as_str().unwrap().starts_with("claim.kind:"), "{body}");

    let (status, body) = call(&app, "POST", "/price", Some(json!({"claim": {"kind": "call", "strike": -5}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");

    let (status, _) = call(&app, "POST", "/solve", Some(json!({"sigma": -1.0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = call(&app, "POST", "/distribution", Some(json!({"n": 10}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn infeasible_bounds_are_unprocessable() {
    // ten units of cash and half a call cannot cover a call on [100, 5000]
    let rates = RatePair::new(0.03, 0.0043).unwrap();
    let book = QuoteBook::new(
        vec![Instrument::cash(rates), Instrument::new("C2095", InstrumentKind::Call { strike: 2095.0 }).unwrap()],
        vec![
            Quote::new(CASH_ID, 1.0, 1.0, Some(10.0), Some(10.0)).unwrap(),
            Quote::new("C2095", 26.9, 28.2, Some(0.5), Some(0.5)).unwrap(),
        ],
        2056.32,
        0.19,
    )
    .unwrap();
    let app = router(Engine::with_book(SessionConfig::default(), book));
    let (status, body) = call(&app, "POST", "/bounds", Some(json!({"claim": {"kind": "call", "strike": 2095}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "infeasible");
    assert!(!body["regions"].as_array().unwrap().is_empty());
}

#[test]
fn error_kinds_map_to_status_codes() {
    assert_eq!(classify(&Error::Solver("x".into())).0, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(classify(&Error::Unpriceable("x".into())).0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(classify(&Error::Infeasible { regions: vec![] }).0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(classify(&Error::Validation("x".into())).0, StatusCode::BAD_REQUEST);
    assert_eq!(classify(&Error::Parse { line: 1, message: "x".into() }).0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn all_endpoints_answer() {
    let app = router(common::mini_engine());
    let (s, solve) = call(&app, "POST", "/solve", Some(json!({}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(solve["instrument_ids"].as_array().unwrap().len(), 4);
    assert_eq!(solve["status"], "optimal");

    let (s, bounds) = call(&app, "POST", "/bounds", Some(json!({"claim": {"kind": "call", "strike": 2095}}))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(bounds["superhedge"]["cost"].as_f64().unwrap() <= 28.20 + 1e-9);
    assert!(bounds["subhedge"]["cost"].as_f64().unwrap() <= bounds["superhedge"]["cost"].as_f64().unwrap());

    let spec = json!({"parameter": "lambda", "values": [1, 2], "target": "portfolio_risk"});
    let (s, sweep) = call(&app, "POST", "/sweep", Some(spec)).await;
    assert_eq!(s, StatusCode::OK);
    assert!(sweep["csv"].as_str().unwrap().starts_with("lambda,sell_price,buy_price,entropic_risk,status\n"));
    assert_eq!(sweep["rows"].as_array().unwrap().len(), 2);

    let (s, dist) = call(&app, "POST", "/distribution", Some(json!({"n": 10000, "seed": 3, "bins": 10}))).await;
    assert_eq!(s, StatusCode::OK, "{dist}");
    assert_eq!(dist["distribution"]["n"], 10000);
    let counts: u64 = dist["distribution"]["bins"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(counts, 10000);
    let (_, zero) = call(&app, "POST", "/distribution", Some(json!({"n": 10000, "portfolio": []}))).await;
    assert_eq!(zero["distribution"]["max"], 0.0);
}

#[tokio::test]
async fn repeated_requests_hit_the_cache() {
    let engine = common::mini_engine();
    let app = router(engine.clone());
    let body = json!({"claim": {"kind": "put", "strike": 2095}, "price_tol": 0.01});
    let (_, first) = call(&app, "POST", "/price", Some(body.clone())).await;
    // same request with fields in another order
    let reordered = json!({"price_tol": 0.01, "claim": {"strike": 2095, "kind": "put"}});
    let (_, second) = call(&app, "POST", "/price", Some(reordered)).await;
    assert_eq!(first, second);
    let uncached = router_with_cache(engine, 0);
    let (_, third) = call(&uncached, "POST", "/price", Some(body)).await;
    assert_eq!(first, third);
}

fn claims() -> Vec<Value> {
    let mut out = Vec::new();
    for i in 0..8 {
        let k = 1950.0 + 25.0 * i as f64;
        out.push(json!({"kind": "call", "strike": k}));
        out.push(json!({"kind": "put", "strike": k}));
        out.push(json!({"kind": "digital", "strike": k, "amount": 100.0}));
        out.push(json!({"kind": "scaled", "multiplier": 1.0 + i as f64, "inner": {"kind": "call", "strike": 2095}}));
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_pricing_matches_serial_runs() {
    let engine = common::mini_engine();
    let requests: Vec<Value> = claims()
        .into_iter()
        .enumerate()
        .map(|(i, c)| json!({"claim": c, "lambda": 1.0 + (i % 3) as f64, "price_tol": 0.01}))
        .collect();
    assert_eq!(requests.len(), 32);
    let serial: Vec<Value> = requests
        .iter()
        .map(|r| {
            let req: PriceRequest = serde_json::from_value(r.clone()).unwrap();
            serde_json::to_value(engine.price(&req).unwrap()).unwrap()
        })
        .collect();

    let app = router_with_cache(engine, 0);
    let mut tasks = tokio::task::JoinSet::new();
    // interleave: every request twice, in a shuffled order
    let order: Vec<usize> = (0..64).map(|i| (i * 37) % 64).collect();
    for slot in order {
        let (app, body) = (app.clone(), requests[slot % 32].clone());
        tasks.spawn(async move { (slot % 32, call(&app, "POST", "/price", Some(body)).await) });
    }
    let mut seen = 0;
    while let Some(done) = tasks.join_next().await {
        let (i, (status, body)) = done.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, serial[i], "request {i}");
        seen += 1;
    }
    assert_eq!(seen, 64);
}
