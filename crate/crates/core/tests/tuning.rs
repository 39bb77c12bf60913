mod common;

use rarebench_core::models::ModelParams;
use rarebench_core::tuning::{cross_validate, default_space, kfold_split, search, Sampler, SearchConfig};

fn data() -> rarebench_core::dataset::TabularDataset {
    let x = common::gen_rows(90, 2, 21);
    let y = common::gen_target(&x, 22);
    common::continuous_dataset(x, y)
}

#[test]
fn logged_scores_are_recomputable_and_the_winner_is_minimal() {
    let data = data();
    for kind in ["knn", "decision_tree", "gbdt"] {
        let cfg = SearchConfig {
            budget: 8,
            seed: 3,
            ..Default::default()
        };
        let base = ModelParams::default_for(kind).unwrap();
        let out = search(&base, &default_space(kind), &data, &cfg).unwrap();
        assert!(out.t_hyper > 0.0);
        assert_eq!(out.trials.len(), 8);
        let folds = kfold_split(data.len(), cfg.k, cfg.seed).unwrap();
        for t in &out.trials {
            let mean = t.score.fold_rmse.iter().sum::<f64>() / cfg.k as f64;
            assert_eq!(t.score.mean_rmse, mean);
            assert_eq!(cross_validate(&t.params, &data, &folds), t.score);
        }
        let min = out
            .trials
            .iter()
            .map(|t| t.score.mean_rmse)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.trials[out.best_trial].score.mean_rmse, min);
        assert_eq!(out.trials[out.best_trial].params, out.best);

        let mut log = Vec::new();
        out.write_trials(&mut log).unwrap();
        let text = String::from_utf8(log).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("trial,params_json,mean_rmse,wall_time_s"));
    }
}

#[test]
fn search_is_independent_of_thread_count() {
    let data = data();
    let cfg = SearchConfig {
        budget: 9,
        sampler: Sampler::Grid,
        seed: 4,
        ..Default::default()
    };
    let base = ModelParams::default_for("random_forest").unwrap().with_seed(8);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| search(&base, &default_space("random_forest"), &data, &cfg).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.best, b.best);
    let scores =
        |o: &rarebench_core::tuning::SearchOutcome| o.trials.iter().map(|t| t.score.clone()).collect::<Vec<_>>();
    assert_eq!(scores(&a), scores(&b));
}
