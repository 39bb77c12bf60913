mod common;

use common::{continuous_dataset, gen_rows, gen_target, mse};
use rarebench_core::models::forest::fit_forest;
use rarebench_core::models::gbdt::fit_gbdt;
use rarebench_core::models::knn::distance;
use rarebench_core::models::tree::fit_tree;
use rarebench_core::models::{
    self, Activation, ForestParams, GbdtParams, Growth, Knn, KnnParams, Metric, Mlp, ModelParams, Predictor, TreeParams,
};

fn exhaustive_knn(x: &[Vec<f64>], y: &[f64], q: &[f64], k: usize, metric: Metric, p: f64) -> f64 {
    let mut all: Vec<(f64, usize)> = x
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d: f64 = match metric {
                Metric::Euclidean => r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
                Metric::Manhattan => r.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
                Metric::Minkowski => r
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b).abs().powf(p))
                    .sum::<f64>()
                    .powf(1.0 / p),
            };
            (d, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64
}

#[test]
fn knn_matches_exhaustive_scan() {
    let x = gen_rows(200, 3, 1);
    let y = gen_target(&x, 2);
    let queries = gen_rows(40, 3, 3);
    for (metric, p) in [
        (Metric::Euclidean, 2.0),
        (Metric::Manhattan, 1.0),
        (Metric::Minkowski, 3.0),
    ] {
        for k in [1, 5, 17, 200] {
            let knn = Knn::fit(&KnnParams { k, metric, p }, &x, &y).unwrap();
            for q in &queries {
                let got = knn.predict_row(q);
                let want = exhaustive_knn(&x, &y, q, k, metric, p);
                assert!((got - want).abs() < 1e-12, "{metric:?} k={k}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn knn_ties_break_by_row_index() {
    let x = vec![vec![1.0], vec![-1.0], vec![1.0], vec![3.0]];
    let y = vec![0.1, 0.2, 0.3, 0.4];
    let knn = Knn::fit(
        &KnnParams {
            k: 2,
            ..Default::default()
        },
        &x,
        &y,
    )
    .unwrap();
    assert_eq!(knn.neighbors(&[0.0]), vec![0, 1]);
    assert_eq!(distance(Metric::Euclidean, 2.0, &[0.0, 0.0], &[3.0, 4.0]), 25.0);
}

fn cubed(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter().map(|r| r.iter().map(|v| v.powi(3)).collect()).collect()
}

#[test]
fn tree_models_ignore_monotone_feature_transforms() {
    let x = gen_rows(20, 2, 4);
    let y = gen_target(&x, 5);
    let xc = cubed(&x);
    let tree = TreeParams {
        max_depth: 4,
        min_samples_split: 2,
    };
    let a = fit_tree(&tree, &x, &y).unwrap();
    let b = fit_tree(&tree, &xc, &y).unwrap();
    let forest = ForestParams {
        n_estimators: 10,
        tree: tree.clone(),
        bootstrap: false,
        max_features: 0.5,
        seed: 9,
        ..Default::default()
    };
    let fa = fit_forest(&forest, &x, &y).unwrap();
    let fb = fit_forest(&forest, &xc, &y).unwrap();
    let gbdt = GbdtParams {
        n_estimators: 15,
        max_depth: 3,
        seed: 9,
        ..Default::default()
    };
    let leafwise = GbdtParams {
        growth: Growth::LeafWise,
        max_leaves: 6,
        ..gbdt.clone()
    };
    let ga = fit_gbdt(&gbdt, &x, &y).unwrap();
    let gb = fit_gbdt(&gbdt, &xc, &y).unwrap();
    let la = fit_gbdt(&leafwise, &x, &y).unwrap();
    let lb = fit_gbdt(&leafwise, &xc, &y).unwrap();
    for (r, rc) in x.iter().zip(&xc) {
        assert_eq!(a.predict_row(r), b.predict_row(rc));
        assert_eq!(fa.predict_row(r), fb.predict_row(rc));
        assert_eq!(ga.predict_row(r), gb.predict_row(rc));
        assert_eq!(la.predict_row(r), lb.predict_row(rc));
    }
}

#[test]
fn gbdt_matches_stagewise_refit_and_never_raises_training_error() {
    let x = gen_rows(50, 2, 6);
    let y = gen_target(&x, 7);
    let (eta, depth) = (0.3, 3);
    let mut f: Vec<f64> = vec![y.iter().sum::<f64>() / y.len() as f64; y.len()];
    let mut last = mse(&f, &y);
    for stages in 1..=12 {
        let r: Vec<f64> = y.iter().zip(&f).map(|(t, p)| t - p).collect();
        let tree = fit_tree(
            &TreeParams {
                max_depth: depth,
                min_samples_split: 2,
            },
            &x,
            &r,
        )
        .unwrap();
        for (fi, row) in f.iter_mut().zip(&x) {
            *fi += eta * tree.predict_row(row);
        }
        let g = fit_gbdt(
            &GbdtParams {
                n_estimators: stages,
                eta,
                max_depth: depth,
                reg_lambda: 0.0,
                ..Default::default()
            },
            &x,
            &y,
        )
        .unwrap();
        let pred: Vec<f64> = x.iter().map(|r| g.predict_row(r)).collect();
        for (p, o) in pred.iter().zip(&f) {
            assert!((p - o).abs() < 1e-9, "stage {stages}: {p} vs {o}");
        }
        let now = mse(&pred, &y);
        assert!(now <= last + 1e-15, "stage {stages}: {now} > {last}");
        last = now;
    }
}

#[test]
fn forest_without_resampling_is_the_plain_tree() {
    let x = gen_rows(60, 3, 8);
    let y = gen_target(&x, 9);
    let tree = TreeParams {
        max_depth: 5,
        min_samples_split: 2,
    };
    let plain = fit_tree(&tree, &x, &y).unwrap();
    for n in [1, 7] {
        let f = fit_forest(
            &ForestParams {
                n_estimators: n,
                tree: tree.clone(),
                bootstrap: false,
                sample_fraction: 1.0,
                max_features: 1.0,
                seed: 3,
            },
            &x,
            &y,
        )
        .unwrap();
        for q in gen_rows(30, 3, 10) {
            let (a, b) = (f.predict_row(&q), plain.predict_row(&q));
            if n == 1 {
                assert_eq!(a, b);
            } else {
                assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
            }
        }
    }
}

fn numeric_gradient(net: &Mlp, x: &[Vec<f64>], y: &[f64], h: f64) -> Vec<f64> {
    let theta = net.flatten();
    (0..theta.len())
        .map(|i| {
            let mut plus = net.clone();
            let mut t = theta.clone();
            t[i] += h;
            plus.set_flat(&t);
            let mut minus = net.clone();
            t[i] -= 2.0 * h;
            minus.set_flat(&t);
            (plus.loss(x, y) - minus.loss(x, y)) / (2.0 * h)
        })
        .collect()
}

fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs() / (u.abs() + v.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

#[test]
fn dnn_gradients_match_finite_differences() {
    let x = gen_rows(5, 3, 11);
    let y = gen_target(&x, 12);
    for (act, hidden) in [
        (Activation::Tanh, vec![4]),
        (Activation::Tanh, vec![5, 3]),
        (Activation::Relu, vec![6]),
    ] {
        let net = Mlp::init(3, &hidden, act, 13);
        let analytic = net.gradients(&x, &y).flatten();
        let numeric = numeric_gradient(&net, &x, &y, 1e-5);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "{act:?} {hidden:?}: {err}");
    }
}

#[test]
fn linear_network_gradient_is_the_normal_equation_residual() {
    let x = gen_rows(8, 3, 14);
    let y = gen_target(&x, 15);
    let mut net = Mlp::zeros(3, &[], Activation::Tanh);
    net.set_flat(&[0.3, -0.2, 0.5, 0.1]);
    let g = net.gradients(&x, &y).flatten();
    let n = y.len() as f64;
    let resid: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(r, t)| 0.3 * r[0] - 0.2 * r[1] + 0.5 * r[2] + 0.1 - t)
        .collect();
    for j in 0..3 {
        let want = 2.0 / n * resid.iter().zip(&x).map(|(e, r)| e * r[j]).sum::<f64>();
        assert!((g[j] - want).abs() < 1e-12);
    }
    assert!((g[3] - 2.0 / n * resid.iter().sum::<f64>()).abs() < 1e-12);
}

#[test]
fn predictions_do_not_depend_on_thread_count() {
    let x = gen_rows(80, 2, 16);
    let y = gen_target(&x, 17);
    let data = continuous_dataset(x.clone(), y);
    for kind in ["linear_svr", "knn", "decision_tree", "random_forest", "gbdt", "dnn"] {
        let params = ModelParams::default_for(kind).unwrap().with_seed(5);
        let params = match params {
            ModelParams::Dnn(mut p) => {
                p.epochs = 20;
                ModelParams::Dnn(p)
            }
            ModelParams::RandomForest(mut p) => {
                p.n_estimators = 20;
                ModelParams::RandomForest(p)
            }
            other => other,
        };
        let fit_in = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let h = models::fit(&params, &data).unwrap();
                h.predict(&x).unwrap()
            })
        };
        assert_eq!(fit_in(1), fit_in(4), "{kind}");
    }
}
