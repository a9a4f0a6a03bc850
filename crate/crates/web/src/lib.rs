//! JSON-in/JSON-out operations behind the demo page. The plain functions are
//! ordinary Rust so they can be tested natively; the `#[wasm_bindgen]`
//! wrappers only convert errors.

use std::collections::HashSet;

use ctsearch::data::{generate_synthetic, SyntheticConfig};
use ctsearch::evaluator::{pairwise_ranking_accuracy, spearman_rho, Channel, Evaluator, SyntheticOracleConfig};
use ctsearch::searchspace::{
    contains_spatial_and_temporal, mutate, sample_arch_hyper, to_dual_graph, validate, SpaceConfig,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub const MAX_SERIES: usize = 16;
pub const MAX_STEPS: usize = 2000;
pub const MAX_CANDIDATES: usize = 400;

/// Samples a candidate from `seed`, applies `mutations` single edits, and
/// returns it with its dual graph.
pub fn candidate_json(seed: u64, mutations: u32) -> Result<Value, String> {
    let space = SpaceConfig::default();
    let mut ah = sample_arch_hyper(seed, &space);
    for k in 0..mutations {
        ah = mutate(&ah, seed.wrapping_add(1 + u64::from(k)), &space);
    }
    let g = to_dual_graph(&ah).map_err(|e| e.to_string())?;
    let n = g.num_real_nodes;
    let mut edges = ah.arch.edges.clone();
    edges.sort();
    let mut nodes: Vec<Value> = edges
        .iter()
        .map(|e| json!({"op": e.op.name(), "src": e.src, "dst": e.dst}))
        .collect();
    nodes.push(json!({"op": "Hyper"}));
    let adjacency: Vec<Vec<u8>> = g.adjacency[..n].iter().map(|row| row[..n].to_vec()).collect();
    Ok(json!({
        "candidate": serde_json::to_value(&ah).map_err(|e| e.to_string())?,
        "valid": validate(&ah, &space).is_ok(),
        "spatial_and_temporal": contains_spatial_and_temporal(&ah),
        "dual": {"nodes": nodes, "adjacency": adjacency},
    }))
}

/// Synthetic correlated series, one array per series.
pub fn series_json(n: usize, t: usize, coupling: f64, seed: u64) -> Result<Value, String> {
    if n == 0 || n > MAX_SERIES || t < 2 || t > MAX_STEPS {
        return Err(format!("need 1..={MAX_SERIES} series and 2..={MAX_STEPS} steps"));
    }
    let cfg = SyntheticConfig {
        n,
        t,
        seed,
        coupling,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
    let series: Vec<Vec<f64>> = (0..n).map(|i| (0..t).map(|s| ds.value(i, s, 0)).collect()).collect();
    Ok(json!({"n": n, "t": t, "series": series, "adjacency": ds.adjacency}))
}

/// Scores `count` distinct candidates on a synthetic oracle with proxy noise
/// `noise` (relative to the score spread), and reports how well the noisy
/// channel ranks them.
pub fn noise_study_json(noise: f64, count: usize, seed: u64) -> Result<Value, String> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err("noise must be a non-negative number".into());
    }
    if !(2..=MAX_CANDIDATES).contains(&count) {
        return Err(format!("need 2..={MAX_CANDIDATES} candidates"));
    }
    let space = SpaceConfig::default();
    let oracle = SyntheticOracleConfig::random(seed, space.clone())
        .with_relative_noise(noise, 500)
        .map_err(|e| e.to_string())?;
    let mut seen = HashSet::new();
    let cands: Vec<_> = (0..)
        .map(|k: u64| sample_arch_hyper(seed.wrapping_mul(1_000_003).wrapping_add(k), &space))
        .filter(|ah| seen.insert(ah.clone()))
        .take(count)
        .collect();
    let mut full = Vec::with_capacity(count);
    let mut proxy = Vec::with_capacity(count);
    for ah in &cands {
        full.push(oracle.score(ah, Channel::Full).map_err(|e| e.to_string())?.score);
        proxy.push(oracle.score(ah, Channel::Proxy).map_err(|e| e.to_string())?.score);
    }
    Ok(json!({
        "sigma": oracle.noise_sigma,
        "pra": pairwise_ranking_accuracy(&proxy, &full).map_err(|e| e.to_string())?,
        "spearman": spearman_rho(&proxy, &full).map_err(|e| e.to_string())?,
        "points": full.iter().zip(&proxy).map(|(f, p)| [*f, *p]).collect::<Vec<_>>(),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn candidate(seed: u32, mutations: u32) -> Result<String, JsError> {
    to_js(candidate_json(u64::from(seed), mutations))
}

#[wasm_bindgen]
pub fn series(n: u32, t: u32, coupling: f64, seed: u32) -> Result<String, JsError> {
    to_js(series_json(n as usize, t as usize, coupling, u64::from(seed)))
}

#[wasm_bindgen]
pub fn noise_study(noise: f64, count: u32, seed: u32) -> Result<String, JsError> {
    to_js(noise_study_json(noise, count as usize, u64::from(seed)))
}
