#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarebench_core::dataset::{ColumnMeta, Provenance, TabularDataset};
use rarebench_core::ffs::CrossingForest;
use rarebench_core::process::{
    Basin, BasinSpec, Dynamics, NoiseSpec, ProcessModel, ProcessState, Simulator, WalkParams,
};
use rarebench_core::rng;
use serde_json::json;

pub fn walk(p_up: f64) -> (Simulator, WalkParams) {
    let params = WalkParams {
        p_up,
        floor: -10,
        start: -5,
    };
    let sim = Simulator::new(ProcessModel::RandomWalk(params.clone()), NoiseSpec::silent(), 1.0).unwrap();
    (sim, params)
}

/// Fraction of `n` independent runs from `start` that reach basin B before
/// basin A.
pub fn direct_committer<D: Dynamics>(
    dynamics: &D,
    start: &ProcessState,
    basins: &BasinSpec,
    n: usize,
    seed: u64,
) -> f64 {
    let mut hits = 0;
    for j in 0..n {
        let mut r = rng::stream(seed, &[j as u64]);
        let mut s = start.clone();
        loop {
            s = dynamics.step(&s, &mut r).unwrap();
            match basins.classify_lambda(dynamics.order_parameter(&s)) {
                Basin::B => {
                    hits += 1;
                    break;
                }
                Basin::A => break,
                Basin::Transition => {}
            }
        }
    }
    hits as f64 / n as f64
}

pub fn gen_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect()
}

/// Smooth target in [0, 1] with a little noise.
pub fn gen_target(x: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|row| {
            let s: f64 = row.iter().enumerate().map(|(i, v)| v * (i as f64 + 1.0)).sum();
            (1.0 / (1.0 + (-s).exp()) + r.random_range(-0.05..0.05)).clamp(0.0, 1.0)
        })
        .collect()
}

pub fn continuous_dataset(x: Vec<Vec<f64>>, y: Vec<f64>) -> TabularDataset {
    let d = x[0].len();
    let columns = (0..d).map(|i| ColumnMeta::continuous(format!("f{i}"), "")).collect();
    TabularDataset::new(
        columns,
        x,
        y,
        Provenance {
            process: "synthetic".into(),
            response_action: String::new(),
        },
    )
    .unwrap()
}

pub fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

/// A flat forest of `n` records with random interfaces, response values and
/// committer estimates; a few groups are tight so that filtering bites.
pub fn generated_forest(n: usize, seed: u64) -> CrossingForest {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<_> = (0..n)
        .map(|id| {
            let interface = r.random_range(0..5usize);
            let ra = [0.53, 0.54, 0.55][r.random_range(0..3usize)];
            let p: f64 = if r.random_bool(0.1) {
                r.random_range(0.0..1.0)
            } else {
                (0.15 * interface as f64 + r.random_range(-0.05..0.05)).clamp(0.0, 1.0)
            };
            json!({
                "id": id, "interface": interface, "parent": null, "children": [],
                "state": {"t": 0.0, "x": [p, 1.0 - p], "prev_error": null},
                "successes": 0, "p_b": p, "response_value": ra, "seed_index": 0,
            })
        })
        .collect();
    serde_json::from_value(json!({
        "records": records,
        "roots": [],
        "branches": [10, 10, 10, 10],
    }))
    .unwrap()
}
