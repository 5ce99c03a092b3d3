//! `turnover`: batch front end for the share-turnover pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use turnover_core::pipeline::{self, CommandError, PipelineConfig};

const OVERRIDE_HELP: &str = "\
Any configuration scalar can be overridden with `--<key> <value>` or
`--<key>=<value>`, using dotted paths such as `--forest.n_trees 200` or
`--split.strategy sequential`. `--seed N` sets every nested seed
(split N, boruta N+1, forest N+2, gd N+3, synthetic N+4) and
`--workers N` sets the forest training threads. `--input_format matrix`
ingests a labelled feature matrix (such as `synth --matrix` writes) instead
of trading records.

Exit status: 0 on success, 1 on model or internal errors, 2 on input errors.";

#[derive(Debug, Parser)]
#[command(name = "turnover", version, about = "Daily share-turnover classification pipeline", after_help = OVERRIDE_HELP)]
struct Cli {
    /// JSON configuration file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean, encode and split the input CSV.
    Ingest,
    /// Run Boruta feature selection on the training partition.
    Features,
    /// Train the five classifiers.
    Train,
    /// Score the trained models on the validation partition.
    Evaluate,
    /// Classify raw record rows with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rows: PathBuf,
        /// Output path; defaults to <workdir>/predictions.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic record CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Also write the generator's labelled feature matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
}

/// Flags handled by clap; every other `--name` is a configuration override.
const CLAP_FLAGS: [&str; 9] = [
    "config", "verbose", "help", "version", "model", "rows", "out", "matrix", "v",
];

/// Splits configuration overrides out of the argument list.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    if let Some(program) = it.next() {
        rest.push(program);
    }
    while let Some(arg) = it.next() {
        let Some(name) = arg.strip_prefix("--").filter(|n| !n.is_empty()) else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (name.to_string(), None),
        };
        if CLAP_FLAGS.contains(&key.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| format!("missing value for --{key}"))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<String, CommandError> {
    let cfg: PipelineConfig = pipeline::load_config(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::Ingest => pipeline::cmd_ingest(&cfg),
        Command::Features => pipeline::cmd_features(&cfg),
        Command::Train => pipeline::cmd_train(&cfg),
        Command::Evaluate => pipeline::cmd_evaluate(&cfg),
        Command::Predict { model, rows, out } => {
            pipeline::cmd_predict(&cfg, &model, &rows, out.as_deref())
        }
        Command::Synth { out, matrix } => pipeline::cmd_synth(&cfg, &out, matrix.as_deref()),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli, &overrides) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_are_separated_from_clap_flags() {
        let (rest, ov) = split_overrides(args(&[
            "turnover",
            "--config",
            "c.json",
            "--seed",
            "4",
            "predict",
            "--model",
            "m.json",
            "--forest.n_trees=9",
            "--rows",
            "r.csv",
        ]))
        .unwrap();
        assert_eq!(
            rest,
            args(&[
                "turnover", "--config", "c.json", "predict", "--model", "m.json", "--rows", "r.csv"
            ])
        );
        assert_eq!(
            ov,
            vec![
                ("seed".into(), "4".into()),
                ("forest.n_trees".into(), "9".into())
            ]
        );
        assert!(split_overrides(args(&["turnover", "train", "--workers"])).is_err());
    }
}
