//! Shipped scenario fixtures evaluated against a table of exact reference
//! values.

mod common;

use ssm_core::density::BandwidthMatrix;
use ssm_core::pipeline::ws_grid;
use ssm_core::reference::{ws_probability, WsParams};
use ssm_core::regression::{SsmTable, TableMetadata};
use ssm_core::scenario::{evaluate_scenario, Scenario};

fn exact_ws_table() -> SsmTable {
    let design = ws_grid().unwrap();
    let ws = WsParams::default();
    let probs = design
        .iter()
        .map(|x| ws_probability(x[0], x[1], &ws).unwrap())
        .collect();
    let b = BandwidthMatrix::diagonal(&design.default_bandwidth_diag()).unwrap();
    SsmTable::new(
        design,
        probs,
        b,
        TableMetadata::new("ws", &["dv", "ttc"], 0),
    )
    .unwrap()
}

fn load(name: &str) -> Scenario {
    Scenario::load(&common::fixture(&format!("scenarios/{name}.json"))).unwrap()
}

#[test]
fn fixture_geometry() {
    let safe = load("safe");
    let min_gap = |s: &Scenario| {
        (0..=150)
            .map(|k| s.gap(k as f64 * 0.1))
            .fold(f64::INFINITY, f64::min)
    };
    assert!(min_gap(&safe) > 25.0);
    let risky = load("risky");
    assert!(risky.impact_time().is_none());
    let g = min_gap(&risky);
    assert!(g > 5.0 && g < 7.0, "{g}");
    let ti = load("collision").impact_time().unwrap();
    assert!(ti > 6.0 && ti < 7.0, "{ti}");
}

#[test]
fn exact_table_rates_the_fixtures() {
    let table = exact_ws_table();
    let ws = WsParams::default();
    let eval = |name: &str| evaluate_scenario(&load(name), &table, &ws).unwrap();
    assert!(eval("safe").max_p_table() < 0.1);
    assert!(eval("cruise").max_p_table() == 0.0);
    let collision = eval("collision");
    assert!(collision.max_p_table() >= 0.95);
    assert!(collision.points.last().unwrap().t < collision.impact_time.unwrap());
    assert!(collision.max_p_ws() >= 0.95);
}
