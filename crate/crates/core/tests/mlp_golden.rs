//! Classifier outputs against values from `data/mlp_golden.py`.

use serde_json::Value;
use termset_core::mlp::{MlpModel, INPUT_WIDTH};

const GOLDEN: &str = include_str!("data/mlp_golden.json");

#[test]
fn forward_matches_reference_to_twelve_decimals() {
    let golden: Value = serde_json::from_str(GOLDEN).unwrap();
    let model = MlpModel::load(golden["model"].to_string().as_bytes()).unwrap();
    assert_eq!(model.hidden, 4);
    let cases = golden["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 15);
    for case in cases {
        let mut x = [0.0; INPUT_WIDTH];
        for (slot, v) in x.iter_mut().zip(case["input"].as_array().unwrap()) {
            *slot = v.as_f64().unwrap();
        }
        let want: f64 = case["output"].as_str().unwrap().parse().unwrap();
        let got = model.forward(&x).unwrap();
        assert!((got - want).abs() < 5e-13, "{x:?}: {got:.15} vs {want:.15}");
    }
}

#[test]
fn save_load_keeps_outputs() {
    let golden: Value = serde_json::from_str(GOLDEN).unwrap();
    let model = MlpModel::load(golden["model"].to_string().as_bytes()).unwrap();
    let mut buf = Vec::new();
    model.save(&mut buf).unwrap();
    assert_eq!(MlpModel::load(buf.as_slice()).unwrap(), model);
}
