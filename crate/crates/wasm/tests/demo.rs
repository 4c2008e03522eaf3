use rewardsmith_wasm::{mock_search, reward_heatmap, training_curve};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn heatmap_peaks_at_the_target() {
    let map = parse(reward_heatmap("pointmass_reach", "dist_r = -dist", 41, 3));
    let values = map["values"].as_array().unwrap();
    assert_eq!(values.len(), 41);
    let target: Vec<f64> = map["target"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let axis: Vec<f64> = map["axis"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let (mut best, mut at) = (f64::NEG_INFINITY, (0, 0));
    for (r, row) in values.iter().enumerate() {
        for (c, v) in row.as_array().unwrap().iter().enumerate() {
            if v.as_f64().unwrap() > best {
                best = v.as_f64().unwrap();
                at = (r, c);
            }
        }
    }
    let step = axis[1] - axis[0];
    assert!((axis[at.1] - target[0]).abs() <= step);
    assert!((axis[at.0] - target[1]).abs() <= step);
    assert!(best <= 0.0 && best > -step);
}

#[test]
fn bad_inputs_come_back_as_errors() {
    assert!(parse(reward_heatmap("cartpole", "a = 1", 10, 0))["error"].is_string());
    assert!(parse(reward_heatmap("pointmass_reach", "a = -nope", 10, 0))["error"].is_string());
    assert!(parse(training_curve("nowhere", "a = 1", 5, 0))["error"].is_string());
    assert!(parse(mock_search("pointmass_reach", 50, 2, 0))["error"].is_string());
}

#[test]
fn training_curve_has_one_point_per_checkpoint() {
    let c = parse(training_curve("pointmass_reach", "dist_r = -dist", 10, 0));
    assert_eq!(c["fitness"].as_array().unwrap().len(), 10);
    assert_eq!(c["generation"][9], 10);
    assert!(c["final_fitness"].as_f64().unwrap() >= c["initial_fitness"].as_f64().unwrap());
}

#[test]
fn mock_search_is_monotone_and_repeatable() {
    let a = mock_search("pointmass_reach", 3, 3, 1);
    assert_eq!(a, mock_search("pointmass_reach", 3, 3, 1));
    let v = parse(a);
    let so_far: Vec<f64> = v["best_so_far"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(so_far.len(), 3);
    assert!(so_far.windows(2).all(|w| w[1] >= w[0]));
    assert!(v["best_program"].is_string());
}
