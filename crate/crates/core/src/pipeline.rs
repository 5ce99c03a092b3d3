//! End-to-end batch commands: ingest, feature selection, training,
//! evaluation, prediction and synthetic data generation.
//!
//! Every command reads its inputs from the configured working directory,
//! computes everything in memory and only then writes its artifacts, each
//! through a temporary file renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind as IoErrorKind;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{
    train_multinomial_logreg, train_single_tree, train_svm_ovr, GdConfig, TreeVariant,
};
use crate::boruta::{read_decisions_csv, run_boruta, BorutaConfig, Decision};
use crate::data_model::{validate_record, LabeledDataset, TurnoverBins, TurnoverClass, N_CLASSES};
use crate::error::Error;
use crate::evaluation::{
    comparative_report, figure3_svg, figure4_svg, generate_synthetic, shares_sum_by_class,
    write_figure3_csv, write_figure4_csv, yearly_average_turnover, NamedModel, SyntheticSpec,
};
use crate::forest::{predict_forest, train_forest_with, ForestOptions, TreeParams};
use crate::ingestion::{
    drop_missing, encode_with, parse_csv, read_dataset_csv, split_train_validation, to_records,
    write_dataset_csv, write_records_csv, Column, DatasetSidecar, FeatureEncoder, SplitConfig,
};
use crate::model::{ModelDocument, TrainedModel};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Model names in training order; each is saved as `model_<name>.json`.
pub const MODEL_NAMES: [&str; 5] = ["randforest", "party", "rpart", "svm", "mlr"];

pub const CLEAN_CSV: &str = "clean.csv";
pub const ENCODED_CSV: &str = "encoded.csv";
pub const ENCODED_SIDECAR: &str = "encoded.meta.json";
pub const TRAIN_CSV: &str = "train.csv";
pub const VALID_CSV: &str = "valid.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const BORUTA_CSV: &str = "boruta.csv";
pub const BORUTA_HISTORY_JSON: &str = "boruta_history.json";
pub const TRAINING_JSON: &str = "training.json";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";

pub fn model_file(name: &str) -> String {
    format!("model_{name}.json")
}

pub fn confusion_file(name: &str) -> String {
    format!("confusion_{name}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub params: TreeParams,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            params: TreeParams::default(),
            seed: 0,
        }
    }
}

/// What `input_csv` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// Daily trading records with the full column set.
    Records,
    /// A labelled feature matrix: numeric feature columns, then `label`.
    /// No record-level figures are produced.
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input_csv: Option<PathBuf>,
    pub input_format: InputFormat,
    pub workdir: PathBuf,
    /// Master seed; when set it replaces every nested seed (see [`PipelineConfig::apply_seed`]).
    pub seed: Option<u64>,
    /// Training threads for forests, including those inside Boruta.
    pub workers: Option<usize>,
    pub split: SplitConfig,
    pub bins: TurnoverBins,
    pub boruta: BorutaConfig,
    pub forest: ForestConfig,
    pub gd: GdConfig,
    pub feature_exclusions: Vec<String>,
    pub use_boruta_selection: bool,
    pub synthetic: SyntheticSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_csv: None,
            input_format: InputFormat::Records,
            workdir: PathBuf::from("work"),
            seed: None,
            workers: None,
            split: SplitConfig::default(),
            bins: TurnoverBins::default(),
            boruta: BorutaConfig::default(),
            forest: ForestConfig::default(),
            gd: GdConfig::default(),
            feature_exclusions: FeatureEncoder::default_exclusions(),
            use_boruta_selection: true,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl PipelineConfig {
    /// Sets every nested seed from one master seed `s`:
    /// split `s`, Boruta `s+1`, forest `s+2`, gradient descent `s+3`,
    /// synthetic generator `s+4` (all wrapping).
    pub fn apply_seed(&mut self, s: u64) {
        self.seed = Some(s);
        self.split.seed = s;
        self.boruta.seed = s.wrapping_add(1);
        self.forest.seed = s.wrapping_add(2);
        self.gd.seed = s.wrapping_add(3);
        self.synthetic.seed = s.wrapping_add(4);
    }

    /// Applies the master seed and worker count to nested configs, then checks them.
    pub fn resolve(mut self) -> Result<Self, CommandError> {
        if let Some(s) = self.seed {
            self.apply_seed(s);
        }
        self.boruta.workers = self.workers;
        if self.workers == Some(0) {
            return Err(CommandError::input("workers must be at least 1"));
        }
        self.check()
            .map_err(|e| CommandError::input(format!("invalid configuration: {e}")))?;
        Ok(self)
    }

    pub fn check(&self) -> crate::Result<()> {
        self.split.check()?;
        self.bins.check()?;
        self.boruta.check()?;
        self.forest.params.check()?;
        if self.forest.n_trees == 0 {
            return Err(Error::domain("forest.n_trees must be positive"));
        }
        self.gd.check()?;
        self.synthetic.check()
    }

    /// The configuration without execution-only settings, as recorded in the manifest.
    fn recorded(&self) -> Self {
        let mut c = self.clone();
        c.workers = None;
        c.boruta.workers = None;
        c
    }

    fn path(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }
}

/// Loads a JSON config (or the defaults) and applies `key = value` overrides.
///
/// Keys are dotted paths into the config, e.g. `forest.n_trees`. Values are
/// parsed as JSON where possible and taken as strings otherwise.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<PipelineConfig, CommandError> {
    let base = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CommandError::input(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str::<PipelineConfig>(&text)
                .map_err(|e| CommandError::input(format!("invalid config {}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    let mut value = serde_json::to_value(&base).map_err(CommandError::internal_from)?;
    for (key, raw) in overrides {
        set_path(&mut value, key, raw)?;
    }
    let cfg: PipelineConfig = serde_json::from_value(value)
        .map_err(|e| CommandError::input(format!("invalid configuration override: {e}")))?;
    cfg.resolve()
}

fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<(), CommandError> {
    let unknown = || CommandError::input(format!("unknown configuration key {key:?}"));
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part).ok_or_else(unknown)?,
            Value::Array(items) => part
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(unknown)?,
            _ => return Err(unknown()),
        };
    }
    let parsed = serde_json::from_str::<Value>(raw).ok();
    *node = match (&*node, parsed) {
        (_, Some(v @ (Value::Object(_) | Value::Array(_)))) => v,
        (Value::String(_), _) => Value::String(raw.to_string()),
        (_, Some(v)) => v,
        (_, None) => Value::String(raw.to_string()),
    };
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad input files, arguments or configuration.
    Input,
    /// Model or internal failure.
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandError {
    pub kind: FailureKind,
    pub message: String,
}

impl CommandError {
    pub fn input(message: impl Into<String>) -> Self {
        CommandError {
            kind: FailureKind::Input,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CommandError {
            kind: FailureKind::Internal,
            message: message.into(),
        }
    }

    fn internal_from(e: impl std::fmt::Display) -> Self {
        Self::internal(e.to_string())
    }

    /// 2 for input errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Input => 2,
            FailureKind::Internal => 1,
        }
    }

    fn context(self, what: impl std::fmt::Display) -> Self {
        CommandError {
            message: format!("{what}: {}", self.message),
            ..self
        }
    }
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Parse { .. }
            | Error::Schema(_) => FailureKind::Input,
            Error::UnknownCompany { .. } => FailureKind::Input,
            Error::Domain(_) | Error::Training { .. } | Error::FeatureMismatch { .. } => {
                FailureKind::Internal
            }
        };
        CommandError {
            kind,
            message: e.to_string(),
        }
    }
}

type CmdResult<T> = Result<T, CommandError>;

/// Files produced by a command, written together once computation is done.
#[derive(Default)]
struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
    removals: Vec<PathBuf>,
}

impl Staged {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn add_with<F>(&mut self, path: PathBuf, write: F) -> CmdResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> crate::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(CommandError::internal_from)?;
        self.add(path, buf);
        Ok(())
    }

    fn commit(self) -> CmdResult<()> {
        let mut temps = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| {
                    CommandError::input(format!("cannot create {}: {e}", dir.display()))
                })?;
            }
            let mut name = path.file_name().unwrap_or_default().to_os_string();
            name.push(".tmp");
            let tmp = path.with_file_name(name);
            if let Err(e) = fs::write(&tmp, bytes) {
                for (t, _) in &temps {
                    let _ = fs::remove_file(t);
                }
                return Err(CommandError::internal(format!(
                    "cannot write {}: {e}",
                    tmp.display()
                )));
            }
            temps.push((tmp, path.clone()));
        }
        for (tmp, path) in temps {
            fs::rename(&tmp, &path).map_err(|e| {
                CommandError::internal(format!("cannot move {} into place: {e}", path.display()))
            })?;
        }
        for path in self.removals {
            match fs::remove_file(&path) {
                Err(e) if e.kind() != IoErrorKind::NotFound => {
                    return Err(CommandError::internal(format!(
                        "cannot remove {}: {e}",
                        path.display()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn json_bytes<T: Serialize>(v: &T) -> CmdResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(CommandError::internal_from)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn read_prerequisite(cfg: &PipelineConfig, name: &str, producer: &str) -> CmdResult<Vec<u8>> {
    let path = cfg.path(name);
    fs::read(&path).map_err(|e| {
        if e.kind() == IoErrorKind::NotFound {
            CommandError::input(format!(
                "{} not found; run {producer} first",
                path.display()
            ))
        } else {
            CommandError::input(format!("cannot read {}: {e}", path.display()))
        }
    })
}

fn read_dataset(cfg: &PipelineConfig, name: &str) -> CmdResult<LabeledDataset> {
    let bytes = read_prerequisite(cfg, name, "ingest")?;
    read_dataset_csv(bytes.as_slice())
        .map_err(|e| CommandError::from(e).context(cfg.path(name).display()))
}

fn histogram_line(h: &[usize; N_CLASSES]) -> String {
    TurnoverClass::ALL
        .iter()
        .zip(h)
        .map(|(c, n)| format!("{c}={n}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Reproducibility record written by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub rows_in: usize,
    pub dropped_missing: usize,
    pub dropped_invalid: usize,
    pub rows_out: usize,
    pub train_rows: usize,
    pub valid_rows: usize,
    pub class_histogram: [usize; N_CLASSES],
    pub split_seed: u64,
    pub bins: TurnoverBins,
    pub companies: Vec<String>,
    pub feature_exclusions: Vec<String>,
    pub feature_names: Vec<String>,
    pub warnings: Vec<String>,
}

fn read_manifest(cfg: &PipelineConfig) -> CmdResult<Manifest> {
    let bytes = read_prerequisite(cfg, MANIFEST_JSON, "ingest")?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| {
        CommandError::input(format!(
            "invalid {}: {e}",
            cfg.path(MANIFEST_JSON).display()
        ))
    })?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(CommandError::input(format!(
            "manifest schema_version {} is not supported",
            m.schema_version
        )));
    }
    Ok(m)
}

/// Cleans, encodes and splits the input records, or splits an input matrix.
pub fn cmd_ingest(cfg: &PipelineConfig) -> CmdResult<String> {
    let input = cfg
        .input_csv
        .as_ref()
        .ok_or_else(|| CommandError::input("no input CSV configured (set input_csv)"))?;
    let in_ctx = input.display();
    let file = fs::File::open(input)
        .map_err(|e| CommandError::input(format!("cannot open {in_ctx}: {e}")))?;
    if cfg.input_format == InputFormat::Matrix {
        let d = read_dataset_csv(file).map_err(|e| CommandError::from(e).context(&in_ctx))?;
        return ingest_dataset(
            cfg,
            d,
            IngestCounts::default(),
            Vec::new(),
            None,
            Vec::new(),
        );
    }
    let table =
        parse_csv(file, &Column::ALL).map_err(|e| CommandError::from(e).context(&in_ctx))?;
    let rows_in = table.len();
    let mut warnings = table.warnings.clone();
    let (table, dropped_missing) = drop_missing(table);
    let parsed = to_records(&table).map_err(|e| CommandError::from(e).context(&in_ctx))?;

    let mut records = Vec::with_capacity(parsed.len());
    let mut dropped_invalid = 0;
    for (i, r) in parsed.into_iter().enumerate() {
        let problems = validate_record(&r);
        if problems.is_empty() {
            records.push(r);
        } else {
            dropped_invalid += 1;
            warn!("dropping invalid record {}: {}", i + 1, problems.join("; "));
        }
    }
    if dropped_invalid > 0 {
        warnings.push(format!(
            "{dropped_invalid} records violated record invariants and were removed"
        ));
    }
    if records.is_empty() {
        return Err(CommandError::input(format!(
            "{in_ctx}: no complete, valid records remain"
        )));
    }

    let encoder = FeatureEncoder::fit(&records, &cfg.feature_exclusions)?;
    let d = encode_with(&encoder, &records, &cfg.bins)
        .map_err(|e| CommandError::input(e.to_string()))?;
    let counts = IngestCounts {
        rows_in,
        dropped_missing,
        dropped_invalid,
    };
    let companies = encoder.companies.clone();
    ingest_dataset(cfg, d, counts, warnings, Some(&records), companies)
}

#[derive(Debug, Default, Clone, Copy)]
struct IngestCounts {
    rows_in: usize,
    dropped_missing: usize,
    dropped_invalid: usize,
}

/// Splits an encoded dataset and writes the ingest artifacts. `records` is
/// `None` for matrix input, in which case any stale `clean.csv` is removed.
fn ingest_dataset(
    cfg: &PipelineConfig,
    d: LabeledDataset,
    counts: IngestCounts,
    mut warnings: Vec<String>,
    records: Option<&[crate::StockRecord]>,
    companies: Vec<String>,
) -> CmdResult<String> {
    let in_ctx = cfg
        .input_csv
        .as_deref()
        .map(Path::display)
        .map(|p| p.to_string())
        .unwrap_or_default();
    let split = split_train_validation(&d, &cfg.split)
        .map_err(|e| CommandError::input(format!("{in_ctx}: {e}")))?;
    warnings.extend(split.warnings.iter().cloned());
    for w in &warnings {
        warn!("{w}");
    }
    let rows_in = if records.is_some() {
        counts.rows_in
    } else {
        d.n_rows()
    };

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        config: cfg.recorded(),
        rows_in,
        dropped_missing: counts.dropped_missing,
        dropped_invalid: counts.dropped_invalid,
        rows_out: d.n_rows(),
        train_rows: split.train.n_rows(),
        valid_rows: split.valid.n_rows(),
        class_histogram: d.class_histogram(),
        split_seed: cfg.split.seed,
        bins: cfg.bins.clone(),
        companies: companies.clone(),
        feature_exclusions: cfg.feature_exclusions.clone(),
        feature_names: d.feature_names().to_vec(),
        warnings,
    };
    let sidecar = DatasetSidecar {
        feature_names: d.feature_names().to_vec(),
        bins: cfg.bins.clone(),
        companies,
        split_seed: cfg.split.seed,
    };

    let mut out = Staged::default();
    match records {
        Some(records) => out.add_with(cfg.path(CLEAN_CSV), |b| write_records_csv(records, b))?,
        None => out.removals.push(cfg.path(CLEAN_CSV)),
    }
    out.add_with(cfg.path(ENCODED_CSV), |b| write_dataset_csv(&d, b))?;
    out.add(
        cfg.path(ENCODED_SIDECAR),
        sidecar
            .to_line()
            .map_err(CommandError::internal_from)?
            .into_bytes(),
    );
    out.add_with(cfg.path(TRAIN_CSV), |b| write_dataset_csv(&split.train, b))?;
    out.add_with(cfg.path(VALID_CSV), |b| write_dataset_csv(&split.valid, b))?;
    out.add(cfg.path(MANIFEST_JSON), json_bytes(&manifest)?);
    out.commit()?;

    let mut s = String::new();
    let _ = writeln!(s, "rows in: {rows_in}");
    let _ = writeln!(s, "dropped (missing values): {}", counts.dropped_missing);
    let _ = writeln!(s, "dropped (invalid): {}", counts.dropped_invalid);
    let _ = writeln!(
        s,
        "rows out: {} (train {}, valid {})",
        d.n_rows(),
        split.train.n_rows(),
        split.valid.n_rows()
    );
    let _ = writeln!(s, "classes: {}", histogram_line(&d.class_histogram()));
    Ok(s)
}

/// Runs Boruta on the training partition.
pub fn cmd_features(cfg: &PipelineConfig) -> CmdResult<String> {
    let train = read_dataset(cfg, TRAIN_CSV)?;
    let report = run_boruta(&train, &cfg.boruta)?;
    let mut out = Staged::default();
    out.add_with(cfg.path(BORUTA_CSV), |b| report.write_csv(b))?;
    let mut history = report.history_json().map_err(CommandError::internal_from)?;
    history.push('\n');
    out.add(cfg.path(BORUTA_HISTORY_JSON), history.into_bytes());
    out.commit()?;

    let mut s = String::new();
    let _ = writeln!(s, "iterations: {}", report.iterations_run);
    let _ = writeln!(s, "confirmed: {}", report.confirmed().join(", "));
    let _ = writeln!(s, "tentative: {}", report.tentative().join(", "));
    let _ = writeln!(s, "rejected: {}", report.rejected().join(", "));
    if !cfg.use_boruta_selection {
        let _ = writeln!(
            s,
            "note: use_boruta_selection is off; training will use all features"
        );
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStatus {
    pub name: String,
    pub trained: bool,
    pub error: Option<String>,
}

/// Deterministic training summary (timings live in `timings.csv`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub selected_features: Vec<String>,
    pub models: Vec<ModelStatus>,
}

fn selected_features(cfg: &PipelineConfig, train: &LabeledDataset) -> CmdResult<Vec<usize>> {
    let all: Vec<usize> = (0..train.n_features()).collect();
    if !cfg.use_boruta_selection {
        return Ok(all);
    }
    let path = cfg.path(BORUTA_CSV);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == IoErrorKind::NotFound => {
            warn!("{} not found; training on all features", path.display());
            return Ok(all);
        }
        Err(e) => {
            return Err(CommandError::input(format!(
                "cannot read {}: {e}",
                path.display()
            )))
        }
    };
    let decisions = read_decisions_csv(bytes.as_slice())
        .map_err(|e| CommandError::from(e).context(path.display()))?;
    let keep: Vec<usize> = all
        .into_iter()
        .filter(|&j| {
            let name = &train.feature_names()[j];
            decisions
                .iter()
                .any(|(n, dec)| n == name && *dec == Decision::Confirmed)
        })
        .collect();
    if keep.is_empty() {
        return Err(CommandError::internal(
            "no features remain after Boruta selection",
        ));
    }
    Ok(keep)
}

fn train_one(name: &str, cfg: &PipelineConfig, d: &LabeledDataset) -> crate::Result<TrainedModel> {
    let tree = |variant| -> crate::Result<TrainedModel> {
        Ok(TrainedModel::DecisionTree {
            variant,
            feature_names: d.feature_names().to_vec(),
            tree: train_single_tree(d, variant)?,
        })
    };
    match name {
        "randforest" => {
            let opts = ForestOptions {
                workers: cfg.workers,
                ..ForestOptions::default()
            };
            let m = train_forest_with(
                d,
                cfg.forest.n_trees,
                &cfg.forest.params,
                cfg.forest.seed,
                &opts,
            )?;
            Ok(TrainedModel::RandomForest(m))
        }
        "party" => tree(TreeVariant::Partylike),
        "rpart" => tree(TreeVariant::Rpartlike),
        "svm" => Ok(TrainedModel::Linear(train_svm_ovr(d, &cfg.gd)?)),
        "mlr" => Ok(TrainedModel::Linear(train_multinomial_logreg(d, &cfg.gd)?)),
        other => Err(Error::domain(format!("unknown model {other}"))),
    }
}

/// Trains the five classifiers on the (optionally Boruta-filtered) training features.
pub fn cmd_train(cfg: &PipelineConfig) -> CmdResult<String> {
    let train = read_dataset(cfg, TRAIN_CSV)?;
    let keep = selected_features(cfg, &train)?;
    let d = train.select_features(&keep);

    let mut out = Staged::default();
    let mut statuses = Vec::new();
    let mut timings = String::from("model,train_seconds\n");
    let mut s = String::new();
    for name in MODEL_NAMES {
        let start = Instant::now();
        let result = train_one(name, cfg, &d);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(model) => {
                info!("trained {name} in {secs:.3}s");
                let doc = ModelDocument::new(name, model);
                let mut json = doc.to_json().map_err(CommandError::internal_from)?;
                json.push('\n');
                out.add(cfg.path(&model_file(name)), json.into_bytes());
                let _ = writeln!(timings, "{name},{secs:.3}");
                let _ = writeln!(s, "{name}: trained in {secs:.3}s");
                statuses.push(ModelStatus {
                    name: name.to_string(),
                    trained: true,
                    error: None,
                });
            }
            Err(e) => {
                warn!("{name} failed: {e}");
                out.removals.push(cfg.path(&model_file(name)));
                let _ = writeln!(s, "{name}: FAILED ({e})");
                statuses.push(ModelStatus {
                    name: name.to_string(),
                    trained: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if !statuses.iter().any(|m| m.trained) {
        return Err(CommandError::internal(format!(
            "no model could be trained\n{s}"
        )));
    }
    let summary = TrainingSummary {
        selected_features: d.feature_names().to_vec(),
        models: statuses,
    };
    out.add(cfg.path(TRAINING_JSON), json_bytes(&summary)?);
    out.add(cfg.path(TIMINGS_CSV), timings.into_bytes());
    out.commit()?;
    let _ = writeln!(s, "features: {}", d.feature_names().len());
    Ok(s)
}

fn read_timings(cfg: &PipelineConfig) -> Vec<(String, f64)> {
    let Ok(text) = fs::read_to_string(cfg.path(TIMINGS_CSV)) else {
        return Vec::new();
    };
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let (name, secs) = l.split_once(',')?;
            Some((name.to_string(), secs.parse().ok()?))
        })
        .collect()
}

fn project(d: &LabeledDataset, names: &[String], model: &str) -> CmdResult<LabeledDataset> {
    let mut idx = Vec::with_capacity(names.len());
    for n in names {
        let j = d.feature_index(n).ok_or_else(|| {
            CommandError::from(Error::FeatureMismatch {
                model: model.to_string(),
                message: format!("feature {n:?} is not in the evaluation data"),
            })
        })?;
        idx.push(j);
    }
    Ok(d.select_features(&idx))
}

fn load_model(path: &Path) -> CmdResult<ModelDocument> {
    let text = fs::read_to_string(path)
        .map_err(|e| CommandError::input(format!("cannot read {}: {e}", path.display())))?;
    ModelDocument::from_json(&text)
        .map_err(|e| CommandError::input(format!("{}: {e}", path.display())))
}

/// Scores every trained model on the validation partition and writes the
/// report, confusion matrices and figure data.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> CmdResult<String> {
    let manifest = read_manifest(cfg)?;
    let valid = read_dataset(cfg, VALID_CSV)?;
    let summary: TrainingSummary =
        serde_json::from_slice(&read_prerequisite(cfg, TRAINING_JSON, "train")?)
            .map_err(|e| CommandError::input(format!("invalid {TRAINING_JSON}: {e}")))?;
    let timings = read_timings(cfg);

    let mut docs = Vec::new();
    for status in summary.models.iter().filter(|m| m.trained) {
        docs.push(load_model(&cfg.path(&model_file(&status.name)))?);
    }
    let first = docs
        .first()
        .ok_or_else(|| CommandError::input("no trained models; run train first"))?;
    let projected = project(&valid, first.model.feature_names(), &first.name)?;
    let named: Vec<NamedModel<'_>> = docs
        .iter()
        .map(|doc| NamedModel {
            name: &doc.name,
            model: &doc.model,
            train_seconds: timings
                .iter()
                .find(|(n, _)| *n == doc.name)
                .map_or(0.0, |t| t.1),
        })
        .collect();
    let report = comparative_report(&named, &projected, manifest.train_rows, manifest.split_seed)?;

    let mut out = Staged::default();
    out.add_with(cfg.path(REPORT_CSV), |b| report.write_csv(b))?;
    for r in &report.rows {
        out.add_with(cfg.path(&confusion_file(&r.name)), |b| {
            r.confusion.write_csv(b)
        })?;
    }
    if manifest.config.input_format == InputFormat::Records {
        let clean = read_prerequisite(cfg, CLEAN_CSV, "ingest")?;
        let records = to_records(&parse_csv(clean.as_slice(), &Column::ALL)?)?;
        let series = yearly_average_turnover(&records);
        let sums = shares_sum_by_class(&records, &manifest.bins)?;
        out.add_with(cfg.path("figure3.csv"), |b| write_figure3_csv(&series, b))?;
        out.add_with(cfg.path("figure4.csv"), |b| write_figure4_csv(&sums, b))?;
        out.add(cfg.path("figure3.svg"), figure3_svg(&series).into_bytes());
        out.add(cfg.path("figure4.svg"), figure4_svg(&sums).into_bytes());
    }
    out.commit()?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>10} {:>14}",
        "model", "accuracy", "train_seconds"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<12} {:>10.2} {:>14.3}",
            r.name, r.accuracy_percent, r.train_seconds
        );
    }
    let f = &report.fingerprint;
    let _ = writeln!(
        s,
        "validation rows: {} (train {}, split seed {}); classes: {}",
        f.valid_rows,
        f.train_rows,
        f.split_seed,
        histogram_line(&f.valid_class_histogram)
    );
    Ok(s)
}

/// Classifies rows with a saved model. Rows are raw records, or for a matrix
/// workdir a CSV holding the model's feature columns by name. An empty rows
/// file yields a predictions file holding only the header.
pub fn cmd_predict(
    cfg: &PipelineConfig,
    model_path: &Path,
    rows_path: &Path,
    out_path: Option<&Path>,
) -> CmdResult<String> {
    let manifest = read_manifest(cfg)?;
    let doc = load_model(model_path)?;
    let rows_ctx = rows_path.display();
    let bytes = fs::read(rows_path)
        .map_err(|e| CommandError::input(format!("cannot read {rows_ctx}: {e}")))?;
    let rows = if bytes.iter().all(u8::is_ascii_whitespace) {
        Vec::new()
    } else {
        match manifest.config.input_format {
            InputFormat::Records => record_rows(&manifest, &doc, &bytes, &rows_ctx)?,
            InputFormat::Matrix => matrix_rows(&doc, &bytes, &rows_ctx)?,
        }
    };

    let forest = match &doc.model {
        TrainedModel::RandomForest(m) => Some(m),
        _ => None,
    };
    let mut csv_out = String::from("row,class");
    if forest.is_some() {
        for c in TurnoverClass::ALL {
            let _ = write!(csv_out, ",votes_{c}");
        }
    }
    csv_out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        match forest {
            Some(m) => {
                let (class, votes) = predict_forest(m, row)?;
                let v: Vec<String> = votes.iter().map(u32::to_string).collect();
                let _ = writeln!(csv_out, "{},{class},{}", i + 1, v.join(","));
            }
            None => {
                let class = doc.model.predict(row)?;
                let _ = writeln!(csv_out, "{},{class}", i + 1);
            }
        }
    }
    let out_path = out_path.map_or_else(|| cfg.path(PREDICTIONS_CSV), Path::to_path_buf);
    let mut out = Staged::default();
    out.add(out_path.clone(), csv_out.into_bytes());
    out.commit()?;
    Ok(format!(
        "{} predictions written to {}\n",
        rows.len(),
        out_path.display()
    ))
}

/// Encodes raw records with the manifest's vocabulary and projects them onto the model's features.
fn record_rows(
    manifest: &Manifest,
    doc: &ModelDocument,
    bytes: &[u8],
    rows_ctx: &impl std::fmt::Display,
) -> CmdResult<Vec<Vec<f64>>> {
    let encoder =
        FeatureEncoder::with_vocabulary(manifest.companies.clone(), &manifest.feature_exclusions)?;
    let needed: Vec<Column> = Column::ALL
        .into_iter()
        .filter(|&c| c != Column::TotalTurnover)
        .collect();
    let table = parse_csv(bytes, &needed).map_err(|e| CommandError::from(e).context(rows_ctx))?;
    if table.position(Column::TotalTurnover).is_none()
        && encoder
            .feature_names()
            .iter()
            .any(|n| n == crate::ingestion::TURNOVER_FEATURE)
    {
        return Err(CommandError::input(format!(
            "{rows_ctx}: the model needs a Total Turnover column"
        )));
    }
    let records = to_records(&table).map_err(|e| CommandError::from(e).context(rows_ctx))?;

    let mut idx = Vec::new();
    for n in doc.model.feature_names() {
        let j = encoder
            .feature_names()
            .iter()
            .position(|e| e == n)
            .ok_or_else(|| {
                CommandError::from(Error::FeatureMismatch {
                    model: doc.name.clone(),
                    message: format!("feature {n:?} is not produced by the manifest's encoder"),
                })
            })?;
        idx.push(j);
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let full = encoder
                .encode(r)
                .map_err(|e| CommandError::from(e).context(format!("{rows_ctx} row {}", i + 1)))?;
            Ok(idx.iter().map(|&j| full[j]).collect())
        })
        .collect()
}

/// Reads the model's feature columns by name; other columns are ignored.
fn matrix_rows(
    doc: &ModelDocument,
    bytes: &[u8],
    rows_ctx: &impl std::fmt::Display,
) -> CmdResult<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CommandError::input(format!("{rows_ctx}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut idx = Vec::new();
    for n in doc.model.feature_names() {
        let j = header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| CommandError::input(format!("{rows_ctx}: missing column {n}")))?;
        idx.push(j);
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CommandError::input(format!("{rows_ctx}: {e}")))?;
        let row = idx
            .iter()
            .map(|&j| {
                let cell = rec.get(j).unwrap_or("");
                cell.trim().parse::<f64>().map_err(|_| {
                    CommandError::input(format!(
                        "{rows_ctx} row {}: {cell:?} is not a number",
                        i + 1
                    ))
                })
            })
            .collect::<CmdResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes a synthetic record CSV, and optionally its abstract feature matrix.
pub fn cmd_synth(
    cfg: &PipelineConfig,
    out_path: &Path,
    matrix_path: Option<&Path>,
) -> CmdResult<String> {
    let (records, d) =
        generate_synthetic(&cfg.synthetic).map_err(|e| CommandError::input(e.to_string()))?;
    let mut out = Staged::default();
    out.add_with(out_path.to_path_buf(), |b| write_records_csv(&records, b))?;
    if let Some(p) = matrix_path {
        out.add_with(p.to_path_buf(), |b| write_dataset_csv(&d, b))?;
    }
    out.commit()?;
    Ok(format!(
        "{} synthetic records written to {} (classes: {})\n",
        records.len(),
        out_path.display(),
        histogram_line(&d.class_histogram())
    ))
}
