use concurrent_rl_demo::{contraction_certificate, pendulum_rollouts, pointmass_ramps};
use serde_json::Value;

fn parse(s: &str) -> Value {
    let v: Value = serde_json::from_str(s).unwrap();
    assert!(v.get("error").is_none(), "binding returned {v}");
    v
}

fn close(v: &Value, expected: f64) -> bool {
    (v.as_f64().unwrap() - expected).abs() < 1e-9
}

#[test]
fn blocking_ramps_complete() {
    let v = parse(&pointmass_ramps(50.0, false, 0.1, 0.0, 0.0, 0.1));
    let steps = v["steps"].as_array().unwrap();
    assert!(close(&steps[0]["to"][0], 0.3) && close(&steps[0]["to"][1], 0.2));
    assert!(close(&v["action_completion"], 1.0));
    assert!(close(&v["sim_duration_s"], 0.3));
}

#[test]
fn concurrent_ramps_roll_over() {
    let v = parse(&pointmass_ramps(50.0, true, 0.1, 0.0, 0.0, 0.1));
    let first = &v["steps"][0];
    assert!(close(&first["executed"][0], 0.05));
    assert!(close(&first["vtg"][0], 0.05));
    assert!(close(&v["action_completion"], 0.5));
    assert!(close(&v["sim_duration_s"], 0.2));
}

#[test]
fn rollouts_differ_in_duration() {
    let v = parse(&pendulum_rollouts(50.0, 40));
    let b = v["blocking"]["sim_duration_s"].as_f64().unwrap();
    let c = v["concurrent"]["sim_duration_s"].as_f64().unwrap();
    assert!((b - 6.0).abs() < 1e-9 && (c - 4.0).abs() < 1e-9);
    assert_eq!(v["concurrent"]["theta"].as_array().unwrap().len(), 41);
}

#[test]
fn certificate_holds_and_reports_errors() {
    let v = parse(&contraction_certificate(5, 2, 0.9, 0.5, 50, 3));
    assert_eq!(v["holds"], true);
    assert_eq!(v["moduli"].as_array().unwrap().len(), 50);
    let bad: Value = serde_json::from_str(&contraction_certificate(5, 2, 1.5, 0.5, 50, 3)).unwrap();
    assert!(bad["error"].is_string());
}
