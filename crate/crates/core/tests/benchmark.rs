use std::collections::BTreeMap;

use proptest::prelude::*;
use rarebench_core::benchmark::{
    average_local_ranking, cost, global_ranking, local_ranking, rank_models, read_metrics, scale_metrics,
    DatasetReport, MetricTable, DEFAULT_WEIGHTS,
};

fn table_strategy() -> impl Strategy<Value = MetricTable> {
    let row = prop::array::uniform7(prop_oneof![Just(0.0), 0.0f64..100.0]);
    prop::collection::vec(row, 1..8).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, r)| (format!("m{i}"), r))
            .collect()
    })
}

proptest! {
    #[test]
    fn ranks_survive_positive_weight_scaling(
        table in table_strategy(),
        w in prop::array::uniform7(0.01f64..4.0),
        k in prop_oneof![Just(3.0), 0.001f64..1000.0],
    ) {
        let (scaled, _) = scale_metrics(&table).unwrap();
        let scaled_w = w.map(|a| a * k);
        prop_assert_eq!(local_ranking(&scaled, &w), local_ranking(&scaled, &scaled_w));
    }

    #[test]
    fn scaled_metrics_are_unit_bounded(table in table_strategy()) {
        let (scaled, zero) = scale_metrics(&table).unwrap();
        for col in 0..7 {
            let values: Vec<f64> = scaled.values().map(|m| m[col]).collect();
            prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
            if zero.contains(&col) {
                prop_assert!(values.iter().all(|&v| v == 0.0));
            } else {
                prop_assert!(values.contains(&1.0));
            }
        }
        for m in scaled.values() {
            let c = cost(m, &DEFAULT_WEIGHTS);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        }
    }

    #[test]
    fn one_weight_vector_reduces_to_average_local_ranking(
        tables in prop::collection::vec(table_strategy(), 1..4),
        w in prop::array::uniform7(0.01f64..4.0),
    ) {
        let models: Vec<String> = tables[0].keys().cloned().collect();
        let tables: BTreeMap<String, MetricTable> = tables
            .into_iter()
            .enumerate()
            .map(|(d, t)| {
                let rows: Vec<_> = t.values().copied().cycle().take(models.len()).collect();
                (format!("d{d}"), models.iter().cloned().zip(rows).collect())
            })
            .collect();
        let local: BTreeMap<String, BTreeMap<String, usize>> = tables
            .iter()
            .map(|(d, t)| (d.clone(), local_ranking(&scale_metrics(t).unwrap().0, &w)))
            .collect();
        let avg = average_local_ranking(&local).unwrap();
        let global = global_ranking(&tables, &[w]).unwrap();
        prop_assert_eq!(global.len(), avg.len());
        for (m, r) in global {
            prop_assert_eq!(r, avg[&m]);
        }
    }
}

#[test]
fn equal_costs_share_a_dense_rank() {
    let costs: BTreeMap<String, f64> = [("a", 0.3), ("b", 0.1), ("c", 0.3), ("d", 0.7)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    let r = rank_models(&costs);
    assert_eq!((r["b"], r["a"], r["c"], r["d"]), (1, 2, 2, 3));
}

#[test]
fn report_bundle_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let table: MetricTable = [
        ("knn".to_string(), [0.1, 2.0, 0.5, 0.01, 0.002, 0.3, 4.0]),
        ("tree".to_string(), [0.2, 1.0, 0.1, 0.02, 0.001, 0.0, 1.0]),
    ]
    .into_iter()
    .collect();
    let report = DatasetReport::new(table.clone(), &DEFAULT_WEIGHTS).unwrap();
    let files = report.write(dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    assert_eq!(read_metrics(&dir.path().join("metrics.csv")).unwrap(), table);
    assert_eq!(
        read_metrics(&dir.path().join("metrics_scaled.csv")).unwrap(),
        report.scaled
    );
    let ranking = std::fs::read_to_string(dir.path().join("ranking.csv")).unwrap();
    assert!(ranking.starts_with("model,rank,cost\n"));
}
