//! Browser bindings for three small pomdpkit computations. Every function
//! returns a JSON string that the static page in `www/` plots on a canvas.

use pomdpkit::detect::{detector_trace, sequential_detection_dp, DetectionDpConfig, DetectorKind, DetectorState};
use pomdpkit::dp::{tiger_model, value_iteration_grid};
use pomdpkit::{ObservationMatrix, RngStream};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn symmetric_sensor(q: f64) -> Result<ObservationMatrix, String> {
    ObservationMatrix::new(vec![vec![q, 1.0 - q], vec![1.0 - q, q]]).map_err(|e| e.to_string())
}

fn fail(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Value function and decision regions of the two-hypothesis sequential
/// test with misclassification cost `l`, measurement cost `c` and a binary
/// sensor that is right with probability `q`.
pub fn detection_curve_json(l: f64, c: f64, q: f64) -> Result<String, String> {
    let b = symmetric_sensor(q)?;
    let cfg = DetectionDpConfig { grid_points: 401, ..DetectionDpConfig::new(l, c) };
    let dp = sequential_detection_dp(&cfg, &b).map_err(|e| e.to_string())?;
    Ok(json!({
        "x": dp.grid,
        "value": dp.value,
        "action": dp.action,
        "lower": dp.lower,
        "upper": dp.upper,
    })
    .to_string())
}

/// Tiger problem value and policy after `horizon` stages, over the belief
/// that the tiger is behind the left door.
pub fn tiger_json(accuracy: f64, horizon: usize) -> Result<String, String> {
    let model = tiger_model(accuracy, accuracy, 100.0, 10.0, 1.0).map_err(|e| e.to_string())?;
    let seq = value_iteration_grid(&model, horizon, 200).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..seq.grid.len()).map(|i| seq.grid.point(i)[0]).collect();
    Ok(json!({
        "x": x,
        "value": seq.native_values(horizon),
        "action": seq.last().policy,
    })
    .to_string())
}

/// One simulated Shiryaev run: geometric change with rate `p`, sensor
/// accuracy `q`, stop when the statistic reaches `threshold`.
pub fn shiryaev_json(p: f64, q: f64, threshold: f64, steps: usize, seed: u64) -> Result<String, String> {
    let b = symmetric_sensor(q)?;
    let state = DetectorState::new(DetectorKind::Shiryaev { p }, 0.0).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(seed, 0);
    let mut change = None;
    let ys: Vec<usize> = (1..=steps)
        .map(|k| {
            if change.is_none() && rng.uniform() < p {
                change = Some(k);
            }
            // state 0 is post-change
            b.sample(usize::from(change.is_none()), &mut rng)
        })
        .collect();
    let rows = detector_trace(&ys, &state, &b, threshold).map_err(|e| e.to_string())?;
    Ok(json!({
        "k": rows.iter().map(|r| r.k).collect::<Vec<_>>(),
        "statistic": rows.iter().map(|r| r.statistic).collect::<Vec<_>>(),
        "change_time": change,
        "stop_time": rows.last().filter(|r| r.stopped).map(|r| r.k),
        "threshold": threshold,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn detection_curve(l: f64, c: f64, q: f64) -> Result<String, JsValue> {
    detection_curve_json(l, c, q).map_err(fail)
}

#[wasm_bindgen]
pub fn tiger(accuracy: f64, horizon: usize) -> Result<String, JsValue> {
    tiger_json(accuracy, horizon).map_err(fail)
}

#[wasm_bindgen]
pub fn shiryaev(p: f64, q: f64, threshold: f64, steps: usize, seed: u64) -> Result<String, JsValue> {
    shiryaev_json(p, q, threshold, steps, seed).map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn detection_curve_is_symmetric() {
        let v: Value = serde_json::from_str(&detection_curve_json(5.0, 0.1, 0.8).unwrap()).unwrap();
        let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
        assert!(lo < hi);
        assert!((lo + hi - 1.0).abs() <= 1.0 / 400.0 + 1e-12);
    }

    #[test]
    fn tiger_policy_listens_in_the_middle() {
        let v: Value = serde_json::from_str(&tiger_json(0.85, 3).unwrap()).unwrap();
        let action = v["action"].as_array().unwrap();
        assert_eq!(action[action.len() / 2].as_u64(), Some(2));
    }

    #[test]
    fn shiryaev_run_is_reproducible() {
        let a = shiryaev_json(0.02, 0.8, 50.0, 400, 3).unwrap();
        assert_eq!(a, shiryaev_json(0.02, 0.8, 50.0, 400, 3).unwrap());
        assert!(shiryaev_json(1.5, 0.8, 50.0, 10, 3).is_err());
    }
}
