//! Browser demo for `xmlad`: per-attribute density curves, a two-feature
//! likelihood field and ROC curves of competing detectors.
//!
//! Each operation has a plain Rust function returning a JSON string and a
//! `wasm_bindgen` wrapper around it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;
use xmlad::adifa::{train, AdifaConfig, Aggregation, AttributeModel};
use xmlad::detector::{Algorithm, AlgorithmConfig, Detector, TrainedModel};
use xmlad::eval::roc_curve;
use xmlad::flatten::{FlatDataset, Label};

const MAX_GRID: usize = 400;
const MAX_ROWS: usize = 5_000;

#[derive(Serialize)]
struct KdeCurve {
    values: Vec<f64>,
    sigma: f64,
    tau: f64,
    entropy: f64,
    /// Trapezoid integral of the density over the plotted range.
    integral: f64,
    curve: Vec<[f64; 2]>,
}

fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{t}` is not a number"))
        })
        .collect()
}

/// Kernel density of a single attribute, sampled on `points` grid points
/// spanning the data plus eight bandwidths either side.
pub fn kde_curve(values: &str, points: usize) -> Result<String, String> {
    let values = parse_values(values)?;
    if values.is_empty() {
        return Err("enter at least one value".into());
    }
    if !(2..=MAX_GRID).contains(&points) {
        return Err(format!("grid size must be between 2 and {MAX_GRID}"));
    }
    let model = AttributeModel::fit(values);
    let lo = model.values[0] - 8.0 * model.sigma;
    let hi = model.values[model.values.len() - 1] + 8.0 * model.sigma;
    let step = (hi - lo) / (points - 1) as f64;
    let curve: Vec<[f64; 2]> = (0..points)
        .map(|i| {
            let x = lo + step * i as f64;
            [x, model.likelihood(x)]
        })
        .collect();
    let integral = curve
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]) * (w[1][1] + w[0][1]) / 2.0)
        .sum();
    json(&KdeCurve {
        sigma: model.sigma,
        tau: model.tau,
        entropy: model.entropy,
        values: model.values,
        integral,
        curve,
    })
}

#[derive(Serialize)]
struct LikelihoodField {
    training: Vec<[f64; 2]>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// `likelihood[j][i]` is the calibrated likelihood at `(xs[i], ys[j])`.
    likelihood: Vec<Vec<f64>>,
    threshold: f64,
    weights: [f64; 2],
}

fn gaussian_pairs(n: usize, correlation: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let rest = (1.0 - correlation * correlation).sqrt();
    (0..n)
        .map(|_| {
            let a = z.sample(rng);
            let b = z.sample(rng);
            [a, correlation * a + rest * b]
        })
        .collect()
}

/// ADIFA trained on `n` correlated Gaussian pairs, evaluated on a
/// `resolution` x `resolution` grid over [-4, 4]^2.
pub fn likelihood_field(
    n: usize,
    correlation: f64,
    psi: &str,
    resolution: usize,
    seed: u64,
) -> Result<String, String> {
    if !(2..=MAX_ROWS).contains(&n) {
        return Err(format!("training size must be between 2 and {MAX_ROWS}"));
    }
    if !(-1.0..=1.0).contains(&correlation) {
        return Err("correlation must be in [-1, 1]".into());
    }
    if !(2..=MAX_GRID / 4).contains(&resolution) {
        return Err(format!("resolution must be between 2 and {}", MAX_GRID / 4));
    }
    let psi: Aggregation = psi.parse()?;
    let training = gaussian_pairs(n, correlation, &mut ChaCha8Rng::seed_from_u64(seed));
    let dataset = FlatDataset::from_rows(
        vec!["/x#min".into(), "/y#min".into()],
        training.iter().map(|p| p.to_vec()).collect(),
    )
    .map_err(|e| e.to_string())?;
    let model = train(
        &dataset,
        AdifaConfig {
            psi,
            ..AdifaConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;

    let axis: Vec<f64> = (0..resolution)
        .map(|i| -4.0 + 8.0 * i as f64 / (resolution - 1) as f64)
        .collect();
    let likelihood = axis
        .iter()
        .map(|&y| {
            axis.iter()
                .map(|&x| {
                    model
                        .classify(&[x, y])
                        .map(|r| r.likelihood)
                        .map_err(|e| e.to_string())
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    json(&LikelihoodField {
        training,
        xs: axis.clone(),
        ys: axis,
        likelihood,
        threshold: model.threshold,
        weights: [model.attributes[0].weight, model.attributes[1].weight],
    })
}

#[derive(Serialize)]
struct RocSeries {
    algorithm: String,
    auc: f64,
    points: Vec<[f64; 2]>,
}

/// Normal rows are standard Gaussians in `dims` dimensions; each anomaly
/// shifts one coordinate, in turn, by `shift`. Detectors train on half the
/// normals and are scored on the rest plus the anomalies.
pub fn roc_demo(
    normals: usize,
    anomalies: usize,
    dims: usize,
    shift: f64,
    seed: u64,
) -> Result<String, String> {
    if !(20..=MAX_ROWS).contains(&normals) || !(1..=MAX_ROWS).contains(&anomalies) {
        return Err(format!(
            "use 20..{MAX_ROWS} normals and 1..{MAX_ROWS} anomalies"
        ));
    }
    if !(1..=20).contains(&dims) {
        return Err("dimensions must be between 1 and 20".into());
    }
    if !shift.is_finite() {
        return Err("shift must be a number".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let row = |rng: &mut ChaCha8Rng| (0..dims).map(|_| z.sample(rng)).collect::<Vec<f64>>();
    let train_rows: Vec<Vec<f64>> = (0..normals / 2).map(|_| row(&mut rng)).collect();
    let mut test: Vec<(Vec<f64>, Label)> = (normals / 2..normals)
        .map(|_| (row(&mut rng), Label::Normal))
        .collect();
    for i in 0..anomalies {
        let mut x = row(&mut rng);
        x[i % dims] += shift;
        test.push((x, Label::Anomalous));
    }
    let names = (0..dims).map(|j| format!("/f{j}#min")).collect();
    let dataset = FlatDataset::from_rows(names, train_rows).map_err(|e| e.to_string())?;
    let labels: Vec<Label> = test.iter().map(|t| t.1).collect();

    let series = [
        Algorithm::AdifaGm,
        Algorithm::AdifaAm,
        Algorithm::Pga,
        Algorithm::Lof,
    ]
    .into_iter()
    .map(|algorithm| {
        let model = TrainedModel::train(&dataset, &AlgorithmConfig::new(algorithm))
            .map_err(|e| e.to_string())?;
        let scores = test
            .iter()
            .map(|(x, _)| model.anomaly_score(x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let roc = roc_curve(&scores, &labels).map_err(|e| e.to_string())?;
        Ok(RocSeries {
            algorithm: algorithm.tag().to_string(),
            auc: roc.auc,
            points: roc.points.iter().map(|p| [p.fpr, p.tpr]).collect(),
        })
    })
    .collect::<Result<Vec<_>, String>>()?;
    json(&series)
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

// Seeds cross the boundary as u32 so plain JS numbers can be passed.

#[wasm_bindgen(js_name = kdeCurve)]
pub fn kde_curve_js(values: &str, points: usize) -> Result<String, JsError> {
    kde_curve(values, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = likelihoodField)]
pub fn likelihood_field_js(
    n: usize,
    correlation: f64,
    psi: &str,
    resolution: usize,
    seed: u32,
) -> Result<String, JsError> {
    likelihood_field(n, correlation, psi, resolution, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rocDemo)]
pub fn roc_demo_js(
    normals: usize,
    anomalies: usize,
    dims: usize,
    shift: f64,
    seed: u32,
) -> Result<String, JsError> {
    roc_demo(normals, anomalies, dims, shift, seed.into()).map_err(|e| JsError::new(&e))
}
