mod common;

use mosaic_core::engines::EngineId;
use mosaic_core::simharness::{run_offline_eval, EvalConfig, GridCell, KnobSource, Measure};

fn config(seed: u64) -> EvalConfig {
    EvalConfig {
        seed,
        ..EvalConfig::default()
    }
}

#[test]
fn same_seed_same_table_across_thread_counts() {
    let fx = common::fixture(90, 9, 8, 5);
    let rec = fx.recommender();
    let profiles = common::random_profiles(&fx.collection(), 24, 6, false);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_offline_eval(&rec, &profiles, &config(17)).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.rankings, four.rankings);
    let (t1, t4) = (one.table().unwrap(), four.table().unwrap());
    assert_eq!(t1.to_csv().unwrap(), t4.to_csv().unwrap());
    assert_eq!(t1.render_text(), t4.render_text());
    assert_eq!(t1.labels.len(), 24);
    assert_eq!(t1.rows.len(), 24 * 23);
}

#[test]
fn table_is_symmetric_with_unit_diagonal() {
    let fx = common::fixture(60, 6, 8, 9);
    let rec = fx.recommender();
    let profiles = common::random_profiles(&fx.collection(), 10, 2, true);
    let table = run_offline_eval(&rec, &profiles, &config(3)).unwrap().table().unwrap();
    let k = table.labels.len();
    for a in 0..k {
        for m in [Measure::Iou, Measure::Rbo] {
            let d = table.cell(a, a, m);
            assert_eq!((d.mean, d.sd, d.n), (1.0, 0.0, 10));
            for b in 0..k {
                assert_eq!(table.cell(a, b, m), table.cell(b, a, m));
            }
        }
    }
    for row in &table.rows {
        let (a, b) = (table.index_of(&row.engine_a).unwrap(), table.index_of(&row.engine_b).unwrap());
        assert!(a < b);
        let s = table.cell(a, b, row.measure);
        assert_eq!((row.mean, row.sd), (s.mean, s.sd));
    }
    assert_eq!(table.non_optimal, vec![0; k]);
}

#[test]
fn single_cell_grid_has_no_pairs() {
    let fx = common::fixture(40, 4, 8, 1);
    let rec = fx.recommender();
    let profiles = common::random_profiles(&fx.collection(), 3, 1, true);
    let cfg = EvalConfig {
        grid: vec![GridCell::new("base-a".parse::<EngineId>().unwrap())],
        ..config(0)
    };
    let table = run_offline_eval(&rec, &profiles, &cfg).unwrap().table().unwrap();
    assert!(table.rows.is_empty());
    assert_eq!(table.to_csv().unwrap().lines().count(), 1);
}

#[test]
fn rate_zero_cells_equal_their_degenerate_engines() {
    let fx = common::fixture(60, 6, 8, 4);
    let rec = fx.recommender();
    let profiles = common::random_profiles(&fx.collection(), 12, 8, false);
    let id = |s: &str| s.parse::<EngineId>().unwrap();
    let cfg = EvalConfig {
        tolerance_rates: vec![0.0],
        grid: vec![
            GridCell::new(id("base-a")),
            GridCell::new(id("fair-a")).xi(KnobSource::Rate(0.0)),
            GridCell::new(id("mosaic-a")).beta(KnobSource::Rate(0.0)).xi(KnobSource::Rate(0.0)),
        ],
        ..config(4)
    };
    let table = run_offline_eval(&rec, &profiles, &cfg).unwrap().table().unwrap();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        assert_eq!(table.cell(a, b, Measure::Iou).mean, 1.0, "{} vs {}", table.labels[a], table.labels[b]);
    }
}
