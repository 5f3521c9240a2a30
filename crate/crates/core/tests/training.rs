use std::path::Path;

use hlhg_core::dataset::write_dataset;
use hlhg_core::fixtures::{minimal_dataset, planted_partition, PlantedPartition};
use hlhg_core::model::{load_checkpoint, save_checkpoint};
use hlhg_core::train::{evaluate, train_model, PRESETS};
use hlhg_core::{
    load_training_dataset, run_experiment, train_once, Dataset, Params, TrainConfig, Variant,
};

fn planted() -> Dataset {
    planted_partition(&PlantedPartition {
        nodes: 500,
        ..Default::default()
    })
    .unwrap()
    .with_normalized_features()
}

fn quick(variant: Variant, p: usize) -> TrainConfig {
    TrainConfig {
        variant,
        order_p: p,
        epochs: 100,
        num_runs: 3,
        ..TrainConfig::hlhg2("unused")
    }
}

#[test]
fn three_node_fixture_is_memorized() {
    let data = minimal_dataset();
    for (variant, p) in [
        (Variant::Hlhg, 2),
        (Variant::Hlhg, 3),
        (Variant::GcnBaseline, 1),
    ] {
        let cfg = TrainConfig {
            variant,
            order_p: p,
            epochs: 200,
            early_stopping_window: None,
            ..TrainConfig::hlhg2("unused")
        };
        let report = train_once(&cfg, &data, 0).unwrap();
        assert_eq!(report.train_accuracy, 1.0, "{variant} p={p}");
        assert_eq!(report.records.len(), 200);
    }
}

#[test]
fn learns_planted_partition() {
    let data = planted();
    let chance = 1.0 / data.num_classes as f64;
    for (variant, p) in [
        (Variant::Hlhg, 2),
        (Variant::GcnBaseline, 1),
        (Variant::ConcatBaseline, 2),
    ] {
        let report = train_once(&quick(variant, p), &data, 1).unwrap();
        assert!(
            report.test_accuracy > chance + 0.3,
            "{variant}: {}",
            report.test_accuracy
        );
        let first = report.records.first().unwrap().train_loss;
        let last = report.records.last().unwrap().train_loss;
        assert!(last < first);
    }
}

#[test]
fn same_seed_gives_identical_report() {
    let data = planted();
    let cfg = quick(Variant::Hlhg, 3);
    let a = train_once(&cfg, &data, 9).unwrap();
    let b = train_once(&cfg, &data, 9).unwrap();
    assert!(a.same_outcome(&b));
    let c = train_once(&cfg, &data, 10).unwrap();
    assert!(!a.same_outcome(&c));
}

#[test]
fn parallel_and_sequential_experiments_agree() {
    let data = planted();
    let cfg = TrainConfig {
        seed: 5,
        ..quick(Variant::Hlhg, 2)
    };
    let par = run_experiment(&cfg, &data, true).unwrap();
    let seq = run_experiment(&cfg, &data, false).unwrap();
    let seeds: Vec<u64> = par.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![5, 6, 7]);
    assert_eq!(
        par.mean_test_accuracy.to_bits(),
        seq.mean_test_accuracy.to_bits()
    );
    for (a, b) in par.runs.iter().zip(&seq.runs) {
        assert!(a.same_outcome(b));
    }
    let mean = par.runs.iter().map(|r| r.test_accuracy).sum::<f64>() / 3.0;
    assert_eq!(par.mean_test_accuracy, mean);
    assert_eq!(par.params, hlhg_core::count_parameters(&par.model));
}

#[test]
fn single_run_has_zero_spread() {
    let data = minimal_dataset();
    let cfg = TrainConfig {
        num_runs: 1,
        epochs: 5,
        ..TrainConfig::hlhg2("unused")
    };
    let report = run_experiment(&cfg, &data, true).unwrap();
    assert_eq!(report.std_test_accuracy, 0.0);
    assert_eq!(report.runs.len(), 1);
}

#[test]
fn evaluation_does_not_touch_parameters() {
    let data = planted();
    let cfg = quick(Variant::Hlhg, 2);
    let (_, params) = train_model(&cfg, &data, 2).unwrap();
    let model = cfg.model_for(&data).unwrap();
    let before = params.checksum();
    let a = evaluate(&params, &data, &model, &data.splits.val).unwrap();
    let b = evaluate(&params, &data, &model, &data.splits.val).unwrap();
    assert_eq!(params.checksum(), before);
    assert_eq!(a, b);
}

#[test]
fn early_stopping_bounds() {
    let data = planted();
    for window in [1, 3, 10] {
        let cfg = TrainConfig {
            early_stopping_window: Some(window),
            ..quick(Variant::Hlhg, 2)
        };
        let report = train_once(&cfg, &data, 0).unwrap();
        assert!(report.stopped_epoch <= cfg.epochs);
        assert_eq!(report.reported_epoch, report.stopped_epoch);
        for acc in [
            report.train_accuracy,
            report.val_accuracy,
            report.test_accuracy,
        ] {
            assert!((0.0..=1.0).contains(&acc));
        }
    }
}

#[test]
fn checkpoint_reproduces_reported_accuracy() {
    let data = planted();
    let cfg = quick(Variant::Hlhg, 3);
    let (report, params) = train_model(&cfg, &data, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let model = cfg.model_for(&data).unwrap();
    save_checkpoint(&path, &model, &params).unwrap();
    let (model2, params2): (_, Params<f32>) = load_checkpoint(&path).unwrap();
    let e = evaluate(&params2, &data, &model2, &data.splits.test).unwrap();
    assert_eq!(e.accuracy, report.test_accuracy);
}

#[test]
fn dataset_written_to_disk_trains_identically() {
    let raw = planted_partition(&PlantedPartition {
        nodes: 300,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&raw, dir.path()).unwrap();
    let loaded = load_training_dataset(dir.path()).unwrap();
    let cfg = quick(Variant::Hlhg, 2);
    let a = train_once(&cfg, &loaded, 0).unwrap();
    let b = train_once(&cfg, &raw.with_normalized_features(), 0).unwrap();
    assert!(a.same_outcome(&b));
}

#[test]
fn shipped_configs_match_presets() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in PRESETS {
        let file = TrainConfig::from_file(&configs.join(format!("{name}.json"))).unwrap();
        let preset = TrainConfig::preset(name, &configs.join("../data")).unwrap();
        assert_eq!(file, preset, "{name}");
    }
}
