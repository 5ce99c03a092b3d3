use turnover_core::boruta::{run_boruta, BorutaConfig};
use turnover_core::evaluation::{
    comparative_report, generate_synthetic, NamedModel, SyntheticSpec,
};
use turnover_core::forest::{permutation_importance, train_forest, TreeParams};
use turnover_core::ingestion::{
    encode_features, read_dataset_csv, split_train_validation, write_dataset_csv, SplitConfig,
};
use turnover_core::model::{ModelDocument, TrainedModel};
use turnover_core::TurnoverBins;

#[test]
fn records_encode_and_train_end_to_end() {
    let spec = SyntheticSpec {
        n_rows: 600,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let (records, _) = generate_synthetic(&spec).unwrap();
    let d = encode_features(&records, &TurnoverBins::default()).unwrap();
    assert_eq!(d.n_rows(), 600);

    let mut buf = Vec::new();
    write_dataset_csv(&d, &mut buf).unwrap();
    assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), d);

    let split = split_train_validation(
        &d,
        &SplitConfig {
            seed: 4,
            ..SplitConfig::default()
        },
    )
    .unwrap();
    let forest = train_forest(&split.train, 50, &TreeParams::default(), 4).unwrap();
    let importance = permutation_importance(&forest, &split.train, 4).unwrap();
    assert_eq!(importance.z.len(), d.n_features());

    let doc = ModelDocument::new("randforest", TrainedModel::RandomForest(forest));
    let restored = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
    let models = [NamedModel {
        name: "randforest",
        model: &restored.model,
        train_seconds: 0.0,
    }];
    let report = comparative_report(&models, &split.valid, split.train.n_rows(), 4).unwrap();
    let row = report.get("randforest").unwrap();
    assert_eq!(row.confusion.total() as usize, split.valid.n_rows());
    // Turnover is the product of shares and price, both of which are features.
    assert!(row.accuracy_percent > 80.0, "{}", row.accuracy_percent);
}

#[test]
fn boruta_keeps_signal_and_drops_noise_on_a_small_problem() {
    let spec = SyntheticSpec {
        n_rows: 400,
        n_informative: 3,
        n_noise: 3,
        seed: 8,
        ..SyntheticSpec::default()
    };
    let (_, d) = generate_synthetic(&spec).unwrap();
    let cfg = BorutaConfig {
        n_trees_per_iteration: 60,
        max_iterations: 30,
        seed: 8,
        ..BorutaConfig::default()
    };
    let report = run_boruta(&d, &cfg).unwrap();
    let confirmed = report.confirmed();
    for j in 0..3 {
        assert!(
            confirmed.contains(&SyntheticSpec::informative_name(j).as_str()),
            "{confirmed:?}"
        );
        assert!(
            !confirmed.contains(&SyntheticSpec::noise_name(j).as_str()),
            "{confirmed:?}"
        );
    }
    assert_eq!(report.features.len(), 6);
}

#[test]
fn matrix_workdir_confirms_the_planted_features() {
    use turnover_core::pipeline::{self, InputFormat, PipelineConfig};

    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.csv");
    let matrix = dir.path().join("matrix.csv");
    let base = PipelineConfig {
        workdir: dir.path().join("w"),
        seed: Some(1),
        ..PipelineConfig::default()
    };
    pipeline::cmd_synth(&base.clone().resolve().unwrap(), &records, Some(&matrix)).unwrap();

    let cfg = PipelineConfig {
        input_csv: Some(matrix.clone()),
        input_format: InputFormat::Matrix,
        ..base
    }
    .resolve()
    .unwrap();
    pipeline::cmd_ingest(&cfg).unwrap();
    let summary = pipeline::cmd_features(&cfg).unwrap();
    let confirmed_line = summary
        .lines()
        .find(|l| l.starts_with("confirmed:"))
        .unwrap();
    let planted = (0..10)
        .filter(|&j| confirmed_line.contains(&SyntheticSpec::informative_name(j)))
        .count();
    assert!(planted >= 9, "{summary}");

    pipeline::cmd_train(&cfg).unwrap();
    pipeline::cmd_evaluate(&cfg).unwrap();
    assert!(!cfg.workdir.join("figure3.csv").exists());
    let report = std::fs::read_to_string(cfg.workdir.join(pipeline::REPORT_CSV)).unwrap();
    assert!(
        report.lines().nth(1).unwrap().starts_with("randforest,"),
        "{report}"
    );

    let out = dir.path().join("p.csv");
    let model = cfg.workdir.join(pipeline::model_file("randforest"));
    pipeline::cmd_predict(&cfg, &model, &matrix, Some(&out)).unwrap();
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 2001);
}
