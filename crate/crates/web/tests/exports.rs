use iotchan_web::{analyze_game, estimate_size, fixture, run_scenario};
use serde_json::json;

fn parse(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn size_export() {
    let v = parse(&estimate_size(2, 2));
    assert_eq!(v["results"], json!({ "min": 372, "max": 376 }));
}

#[test]
fn game_export_uses_fixture() {
    let v = parse(&analyze_game(&fixture("game")));
    assert_eq!(v["results"]["min_fees"]["sigma1"], "10000");
    assert!(v["results"]["equilibria"].as_array().unwrap().contains(&json!("all-follow")));
}

#[test]
fn scenario_export_includes_trace() {
    let v = parse(&run_scenario(&fixture("scenario_breach")));
    assert_eq!(v["results"]["settled"]["gateway"], 0);
    let trace = v["trace"].as_str().unwrap();
    assert!(trace.lines().count() > 10);
}

#[test]
fn errors_are_reported_as_json() {
    let v = parse(&analyze_game("not json"));
    assert!(v["error"].as_str().unwrap().contains("bad config"));
    assert_eq!(fixture("missing"), "");
}
