//! Command-line front-end: run pipelines over a directory of documents,
//! convert between annotation formats, score predictions against
//! references and export provenance graphs.
//!
//! Exit codes: 0 on success, 1 when some documents failed, 2 on a
//! configuration or usage error.

mod convert;
mod corpus;
mod evaluate;
mod prov;
mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cliniflow::eval::MatchMode;
use cliniflow::provenance::VerbosityLevel;
use thiserror::Error;

pub use convert::cmd_convert;
pub use corpus::Format;
pub use evaluate::{cmd_eval, EvalConfig};
pub use prov::cmd_prov_export;
pub use run::{cmd_run, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no counterpart for {stem:?} in {dir}")]
    MissingCounterpart { stem: String, dir: PathBuf },
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingCounterpart { .. } => 2,
            CliError::File { .. } => 1,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CliError::File {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

/// What a command did: the exit status and the per-document failures that
/// were reported on stderr.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cliniflow", version, about = "Annotation pipelines for clinical text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a pipeline over every .txt file of a directory.
    Run(RunArgs),
    /// Convert annotated documents between formats.
    Convert(ConvertArgs),
    /// Score predicted .ann files against reference .ann files.
    Eval(EvalArgs),
    /// Provenance utilities.
    Prov {
        #[command(subcommand)]
        command: ProvCommand,
    },
}

#[derive(Debug, Subcommand)]
enum ProvCommand {
    /// Re-export a PROV-JSON file written by `run --prov-out`.
    Export(ProvExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Level {
    None,
    Steps,
    Full,
}

impl From<Level> for VerbosityLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::None => VerbosityLevel::None,
            Level::Steps => VerbosityLevel::Steps,
            Level::Full => VerbosityLevel::Full,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    pipeline_path: PathBuf,
    #[arg(long)]
    input_dir: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, value_enum, default_value = "brat")]
    output_format: Format,
    #[arg(long, value_enum, default_value = "steps")]
    prov_level: Level,
    /// Where to write the PROV-JSON graph of the run.
    #[arg(long)]
    prov_out: Option<PathBuf>,
    /// Documents processed concurrently.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    in_format: Format,
    #[arg(long, value_enum)]
    out_format: Format,
    #[arg(long)]
    in_path: PathBuf,
    #[arg(long)]
    out_path: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Overlap,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of predicted .ann files; give it twice to compare two runs.
    #[arg(long, required = true, num_args = 1)]
    pred_dir: Vec<PathBuf>,
    #[arg(long)]
    ref_dir: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    /// Minimum IoU in overlap mode.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Match entities whatever their labels.
    #[arg(long)]
    ignore_labels: bool,
    /// Directory holding the .txt files, when they sit next to neither the
    /// references nor the predictions.
    #[arg(long)]
    text_dir: Option<PathBuf>,
    /// Also write the scores as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProvExportArgs {
    #[arg(long)]
    input: PathBuf,
    /// prov-json or dot.
    #[arg(long, default_value = "prov-json")]
    format: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parse `args` (including the program name) and run the command.
/// Reports go to `out`, diagnostics to `err`; returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(
            &RunConfig {
                pipeline_path: a.pipeline_path,
                input_dir: a.input_dir,
                output_dir: a.output_dir,
                output_format: a.output_format,
                prov_level: a.prov_level.into(),
                prov_out: a.prov_out,
                workers: a.workers,
            },
            err,
        ),
        Command::Convert(a) => cmd_convert(a.in_format, a.out_format, &a.in_path, &a.out_path, err),
        Command::Eval(a) => {
            let cfg = EvalConfig {
                pred_dirs: a.pred_dir,
                ref_dir: a.ref_dir,
                mode: match a.mode {
                    Mode::Exact => MatchMode::Exact,
                    Mode::Overlap => MatchMode::Overlap,
                },
                threshold: a.threshold,
                label_sensitive: !a.ignore_labels,
                text_dir: a.text_dir,
                json_out: a.json_out,
            };
            cmd_eval(&cfg, out).map(|_| Outcome::default())
        }
        Command::Prov {
            command: ProvCommand::Export(a),
        } => cmd_prov_export(&a.input, &a.format, a.output.as_deref(), out),
    };
    match result {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
