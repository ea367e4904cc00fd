//! Browser demo: rectify a synthetic label-shifted target, trace the
//! self-training harness, and perturb a class prior.
//!
//! Every export takes plain numbers or strings and returns a JSON string so
//! the page needs no generated bindings beyond the functions themselves.

use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use prior_rectify::harness::{
    accuracy, generate_shifted_domains, noise_draws, run_arm, AdaptConfig, Arm, Domain,
    SyntheticDomainSpec,
};
use prior_rectify::prior::{make_unary_bounds, perturb_unary};
use prior_rectify::rectify::{centroid_distances, probs_from_distances};
use prior_rectify::{rectify, ClassPrior, Error, NeighborMetric, RectifyConfig, Result};

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string())
        .map_err(|e| JsError::new(&e.to_string()))
}

/// Rectifies source-centroid pseudo labels of one synthetic target draw
/// under unary bounds of tightness `sigma`. `penalty` is M; zero or
/// negative means the default `10 n`.
#[wasm_bindgen]
pub fn rectify_demo(
    seed: u32,
    n_target: u32,
    sigma: f64,
    penalty: f64,
    smooth: bool,
) -> std::result::Result<String, JsError> {
    to_js(rectify_value(
        seed.into(),
        n_target as usize,
        sigma,
        penalty,
        smooth,
    ))
}

/// Runs one harness arm (`baseline`, `ub0`, `ub0.5~0.25`, `br`, ...) and
/// returns its per-iteration records.
#[wasm_bindgen]
pub fn harness_trace(
    seed: u32,
    arm: &str,
    iterations: u32,
) -> std::result::Result<String, JsError> {
    to_js(trace_value(seed.into(), arm, iterations as usize))
}

/// Perturbs `probs` (a JSON array) with noise level `phi` and returns the
/// noisy prior with its unary bounds at tightness `sigma`.
#[wasm_bindgen]
pub fn perturb_demo(
    probs: &str,
    phi: f64,
    sigma: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(perturb_value(probs, phi, sigma, seed.into()))
}

fn class_means(domain: &Domain, num_classes: usize) -> Vec<Vec<f64>> {
    let dim = domain.features.dim();
    let mut sums = vec![vec![0.0; dim]; num_classes];
    let counts = domain.class_counts(num_classes);
    for (i, &l) in domain.labels.iter().enumerate() {
        for (s, x) in sums[l].iter_mut().zip(domain.features.row(i)) {
            *s += x;
        }
    }
    for (s, &k) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|x| *x /= k.max(1) as f64);
    }
    sums
}

#[derive(Serialize)]
struct LabelSummary {
    histogram: Vec<usize>,
    accuracy: f64,
}

pub fn rectify_value(
    seed: u64,
    n_target: usize,
    sigma: f64,
    penalty: f64,
    smooth: bool,
) -> Result<Value> {
    let spec = SyntheticDomainSpec::reverse_long_tail(n_target, 0.45, 0.25);
    let c = spec.num_classes;
    let (source, target) = generate_shifted_domains(&spec, seed)?;
    let centroids = class_means(&source, c);
    let p = probs_from_distances(&centroid_distances(
        &target.features,
        &centroids,
        NeighborMetric::Cosine,
    ));
    let truth = ClassPrior::new(
        target
            .class_counts(c)
            .iter()
            .map(|&k| k as f64 / target.len() as f64)
            .collect(),
    )?;
    let k = make_unary_bounds(&truth, sigma)?;
    let cfg = RectifyConfig {
        penalty: (penalty > 0.0).then_some(penalty),
        use_smooth: smooth,
        ..RectifyConfig::default()
    };
    let out = rectify(&p, &k, Some(&target.features), &cfg)?;
    let argmax = p.argmax();
    let summary = |labels: &[usize]| -> Result<LabelSummary> {
        let mut histogram = vec![0; c];
        labels.iter().for_each(|&l| histogram[l] += 1);
        Ok(LabelSummary {
            histogram,
            accuracy: accuracy(labels, &target.labels)?,
        })
    };
    let points: Vec<[f64; 2]> = (0..target.len())
        .map(|i| [target.features.row(i)[0], target.features.row(i)[1]])
        .collect();
    Ok(json!({
        "truth": target.class_counts(c),
        "argmax": summary(argmax.labels())?,
        "rectified": summary(out.labels.labels())?,
        "slack": out.second.slacks.total(),
        "nodes": out.first.nodes + out.second.nodes,
        "certified_optimal": out.second.certified_optimal,
        "uncertain": out.uncertain.len(),
        "points": points,
        "labels": {
            "truth": target.labels,
            "argmax": argmax.labels(),
            "rectified": out.labels.labels(),
        },
    }))
}

pub fn trace_value(seed: u64, arm: &str, iterations: usize) -> Result<Value> {
    let arm: Arm = arm.parse()?;
    let cfg = AdaptConfig {
        iterations,
        ..AdaptConfig::default()
    };
    let trace = run_arm(
        &SyntheticDomainSpec::reverse_long_tail(300, 0.45, 0.25),
        arm,
        seed,
        &cfg,
    )?;
    Ok(serde_json::to_value(trace).expect("traces serialize"))
}

pub fn perturb_value(probs: &str, phi: f64, sigma: f64, seed: u64) -> Result<Value> {
    let probs: Vec<f64> =
        serde_json::from_str(probs).map_err(|e| Error::InvalidPrior(e.to_string()))?;
    let q = ClassPrior::new(probs)?;
    let noisy = perturb_unary(&q, phi, &noise_draws(seed, q.num_classes()))?;
    let k = make_unary_bounds(&noisy, sigma)?;
    Ok(json!({ "noisy": noisy.probs(), "knowledge": k }))
}
