//! The `harssl` command line.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage, 3 configuration, 4 data, 5 numeric.

mod commands;
mod config;
mod data;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{DataSection, EvalSection, RunConfig};
pub use data::{load_dataset, save_dataset, ClassTable, Dataset, CLASSES_FILE, WINDOWS_FILE};

use crate::{Error, ErrorCategory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Numeric => EXIT_NUMERIC,
        ErrorCategory::Io => EXIT_IO,
    }
}

#[derive(Debug, Parser)]
#[command(name = "harssl", version, about = "Self-supervised activity recognition from wrist accelerometry")]
pub struct Cli {
    /// Log level for the JSON-lines log on stderr.
    #[arg(long, global = true, default_value = "info", value_parser = parse_level)]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_level(s: &str) -> std::result::Result<log::LevelFilter, String> {
    s.parse().map_err(|_| format!("unknown log level '{s}' (off, error, warn, info, debug, trace)"))
}

/// Config file plus overrides, shared by most subcommands.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set head.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Global seed; replaces the config file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    All,
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic labeled corpus (CSV + schema + window cache).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        seconds_per_class: Option<f64>,
    },
    /// Resample and window raw recordings into a window cache.
    Ingest {
        /// Delimited text file; needs --schema.
        #[arg(long, conflicts_with = "pamap2")]
        csv: Option<PathBuf>,
        #[arg(long, requires = "csv")]
        schema: Option<PathBuf>,
        /// Directory of PAMAP2 protocol `.dat` files.
        #[arg(long)]
        pamap2: Option<PathBuf>,
        /// Class table for CSV labels; numeric names otherwise.
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Contrastive pre-training of the encoder.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_pairs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV (step, loss, wall_ms).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Checkpoint file rewritten during training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the first N pair batches as JSON to --dump-out.
        #[arg(long, default_value_t = 0, requires = "dump_out")]
        dump_batches: usize,
        #[arg(long)]
        dump_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Embed windows with a frozen encoder (CSV).
    Embed {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the activity head on frozen embeddings.
    TrainHead {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Class table; defaults to the one next to the data.
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        subset: Subset,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the eight per-window statistics (CSV).
    Featurize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the statistics baseline classifier.
    TrainBaseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        subset: Subset,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Predict smoothed activity classes.
    Predict {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        head: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        subset: Subset,
        #[arg(long)]
        out: PathBuf,
        /// Also write the windows' true labels.
        #[arg(long)]
        truth_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score predictions against truth.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// pretrain → train-head → predict → eval from one config.
    Pipeline {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Validate a config file and print it with defaults filled in.
    CheckConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    crate::logging::init(cli.log_level);
    match commands::run(cli.command) {
        Ok(summary) => {
            print!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error ({:?}): {e}", e.category());
            exit_code(&e)
        }
    }
}
