use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use turnover_core::forest::{train_tree, TreeParams};
use turnover_core::ingestion::read_dataset_csv;
use turnover_core::model::{ModelDocument, TrainedModel};
use turnover_core::pipeline::MODEL_NAMES;
use turnover_core::TurnoverClass;

const FAST: [&str; 8] = [
    "--forest.n_trees",
    "25",
    "--boruta.n_trees_per_iteration",
    "25",
    "--boruta.max_iterations",
    "15",
    "--synthetic.n_rows",
    "300",
];

fn turnover(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turnover"))
        .arg("--workdir")
        .arg(workdir)
        .args(FAST)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let input = dir.join("input.csv");
    ok(&turnover(
        dir,
        &["--seed", "3", "synth", "--out", input.to_str().unwrap()],
    ));
    input
}

fn full_run(work: &Path, input: &Path, workers: &str) {
    let base = [
        "--input_csv",
        input.to_str().unwrap(),
        "--seed",
        "5",
        "--workers",
        workers,
    ];
    for cmd in ["ingest", "features", "train", "evaluate"] {
        let mut args = base.to_vec();
        args.push(cmd);
        ok(&turnover(work, &args));
    }
}

/// Report bytes with the wall-clock column removed.
fn report_without_timings(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn pipeline_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path());
    let work = dir.path().join("w");
    let a = dir.path().join("first");
    full_run(&work, &input, "1");
    fs::rename(&work, &a).unwrap();
    full_run(&work, &input, "4");
    let b = work;

    let mut compared = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name == "timings.csv" || name == "report.csv" {
            continue;
        }
        assert!(
            fs::read(a.join(&name)).unwrap() == fs::read(b.join(&name)).unwrap(),
            "{name} differs"
        );
        compared += 1;
    }
    assert!(compared >= 20, "only {compared} artifacts compared");
    assert_eq!(
        report_without_timings(&a.join("report.csv")),
        report_without_timings(&b.join("report.csv"))
    );

    for name in MODEL_NAMES {
        assert!(a.join(format!("model_{name}.json")).exists());
    }
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    let acc: Vec<f64> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(acc.len(), 5);
    assert!(acc.windows(2).all(|w| w[0] >= w[1]), "{report}");
}

#[test]
fn predictions_carry_forest_votes() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path());
    let work = dir.path().join("w");
    full_run(&work, &input, "1");
    let model = work.join("model_randforest.json");
    let out = work.join("p.csv");
    let args = [
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--rows",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&turnover(&work, &args));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "row,class,votes_A,votes_B,votes_C,votes_D,votes_E"
    );
    let mut n = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let votes: u32 = cells[2..].iter().map(|c| c.parse::<u32>().unwrap()).sum();
        assert_eq!(votes, 25);
        n += 1;
    }
    assert_eq!(n, 300);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let args = [
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--rows",
        empty.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&turnover(&work, &args));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "row,class,votes_A,votes_B,votes_C,votes_D,votes_E\n"
    );
}

#[test]
fn unlimited_tree_memorizes_a_training_row() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path());
    let work = dir.path().join("w");
    ok(&turnover(
        &work,
        &["--input_csv", input.to_str().unwrap(), "ingest"],
    ));
    let encoded = read_dataset_csv(fs::File::open(work.join("encoded.csv")).unwrap()).unwrap();
    let params = TreeParams {
        mtry: Some(encoded.n_features()),
        ..TreeParams::default()
    };
    let rows: Vec<usize> = (0..encoded.n_rows()).collect();
    let tree = train_tree(&encoded, &rows, &params, 0).unwrap();
    let doc = ModelDocument::new(
        "full_tree",
        TrainedModel::DecisionTree {
            variant: turnover_core::baselines::TreeVariant::Rpartlike,
            feature_names: encoded.feature_names().to_vec(),
            tree,
        },
    );
    let model = dir.path().join("tree.json");
    fs::write(&model, doc.to_json().unwrap()).unwrap();

    let clean = fs::read_to_string(work.join("clean.csv")).unwrap();
    let one_row: String = clean.lines().take(2).map(|l| format!("{l}\n")).collect();
    let rows_path = dir.path().join("one.csv");
    fs::write(&rows_path, one_row).unwrap();
    let out = dir.path().join("p.csv");
    let args = [
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--rows",
        rows_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&turnover(&work, &args));
    let text = fs::read_to_string(out).unwrap();
    let predicted: TurnoverClass = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(predicted, encoded.label(0));
}

#[test]
fn ingest_counts_dropped_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path());
    let text = fs::read_to_string(&input).unwrap();
    let mut lines: Vec<String> = text.lines().take(101).map(str::to_string).collect();
    for i in [3, 20, 41, 60, 99] {
        let mut cells: Vec<&str> = lines[i].split(',').collect();
        cells[2] = "";
        lines[i] = cells.join(",");
    }
    let trimmed = dir.path().join("hundred.csv");
    fs::write(&trimmed, lines.join("\n") + "\n").unwrap();
    let work = dir.path().join("w");
    let summary = ok(&turnover(
        &work,
        &["--input_csv", trimmed.to_str().unwrap(), "ingest"],
    ));
    assert!(summary.contains("dropped (missing values): 5"), "{summary}");
    assert_eq!(
        fs::read_to_string(work.join("clean.csv"))
            .unwrap()
            .lines()
            .count(),
        96
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(work.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["dropped_missing"], 5);
    assert_eq!(manifest["rows_out"], 95);

    let train_before = fs::read(work.join("train.csv")).unwrap();
    ok(&turnover(
        &work,
        &["--input_csv", trimmed.to_str().unwrap(), "ingest"],
    ));
    assert_eq!(fs::read(work.join("train.csv")).unwrap(), train_before);
}

#[test]
fn input_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("w");

    let missing = dir.path().join("nope.csv");
    let out = turnover(&work, &["--input_csv", missing.to_str().unwrap(), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.csv"), "{}", stderr(&out));

    let out = turnover(&work, &["features"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("run ingest first"),
        "{}",
        stderr(&out)
    );

    let out = turnover(&work, &["--forest.n_tres", "3", "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("forest.n_tres"));

    let out = turnover(&work, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_company_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path());
    let work = dir.path().join("w");
    ok(&turnover(
        &work,
        &[
            "--input_csv",
            input.to_str().unwrap(),
            "--use_boruta_selection",
            "false",
            "ingest",
        ],
    ));
    ok(&turnover(
        &work,
        &["--use_boruta_selection", "false", "train"],
    ));

    let text = fs::read_to_string(&input).unwrap();
    let header = text.lines().next().unwrap();
    let row = text.lines().nth(1).unwrap();
    let (front, _) = row.rsplit_once(',').unwrap();
    let rows_path = dir.path().join("new.csv");
    fs::write(&rows_path, format!("{header}\n{front},Wipro\n")).unwrap();
    let model = work.join("model_mlr.json");
    let out = turnover(
        &work,
        &[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--rows",
            rows_path.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("Wipro") && err.contains("Apollo"), "{err}");
}

#[test]
fn rejecting_every_feature_aborts_training() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path());
    let work = dir.path().join("w");
    ok(&turnover(
        &work,
        &["--input_csv", input.to_str().unwrap(), "ingest"],
    ));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(work.join("manifest.json")).unwrap()).unwrap();
    let mut csv = String::from("feature,decision,hits,trials,mean_z\n");
    for f in manifest["feature_names"].as_array().unwrap() {
        csv.push_str(&format!("{},Rejected,0,10,0\n", f.as_str().unwrap()));
    }
    fs::write(work.join("boruta.csv"), csv).unwrap();
    let out = turnover(&work, &["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no features remain"));

    let out = turnover(&work, &["--use_boruta_selection", "false", "train"]);
    ok(&out);
}
