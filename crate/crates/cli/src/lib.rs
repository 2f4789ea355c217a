//! `asana` command line: prepare, train, tune, evaluate and report.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{read_config_file, resolve, split_assignment, RunConfig};
use crate::error::{CliError, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(
    name = "asana",
    version,
    about = "Transfer-learning yoga pose classifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the enhancement chain over an image directory
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Label manifest to rewrite for the prepared files
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Random search over head, freeze policy and learning rate
    Tune {
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on the test manifest
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test manifest (same as --test-manifest)
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Report directory (default: eval/ next to the checkpoint)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Comparison table over evaluated runs
    Report {
        /// metrics.json files or directories containing one
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every config key
    Keys,
}

/// Config layers shared by the subcommands. Named flags are shorthands for
/// `--set key=value` and are applied after the config file.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML file of `key = value` settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub freeze: Option<String>,
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr0: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub contrast_factor: Option<String>,
    /// on/off
    #[arg(long)]
    pub sharpen: Option<String>,
    #[arg(long)]
    pub target_size: Option<String>,
    #[arg(long)]
    pub data_root: Option<String>,
    #[arg(long)]
    pub train_manifest: Option<String>,
    #[arg(long)]
    pub test_manifest: Option<String>,
    #[arg(long)]
    pub runs_dir: Option<String>,
    #[arg(long)]
    pub run_name: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub budget_epochs: Option<String>,
    #[arg(long)]
    pub space: Option<String>,
}

fn on_off(s: &str) -> String {
    match s.to_ascii_lowercase().as_str() {
        "on" | "yes" => "true".into(),
        "off" | "no" => "false".into(),
        _ => s.into(),
    }
}

impl Common {
    /// Overrides in application order: `--set` first, named flags last.
    pub fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for s in &self.set {
            out.push(split_assignment(s)?);
        }
        let named = [
            ("family", &self.family),
            ("weights", &self.weights),
            ("variant", &self.variant),
            ("freeze", &self.freeze),
            ("head", &self.head),
            ("max_epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr0", &self.lr0),
            ("patience", &self.patience),
            ("seed", &self.seed),
            ("contrast_factor", &self.contrast_factor),
            ("target_size", &self.target_size),
            ("data_root", &self.data_root),
            ("train_manifest", &self.train_manifest),
            ("test_manifest", &self.test_manifest),
            ("runs_dir", &self.runs_dir),
            ("run_name", &self.run_name),
            ("workers", &self.workers),
            ("trials", &self.trials),
            ("budget_epochs", &self.budget_epochs),
            ("space_file", &self.space),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        if let Some(s) = &self.sharpen {
            out.push(("sharpen_enabled".into(), on_off(s)));
        }
        Ok(out)
    }

    /// Resolves the layers; `fallback` is used as the file layer when no
    /// `--config` was given.
    pub fn resolve(&self, fallback: Option<&Path>) -> Result<RunConfig, CliError> {
        let path = self.config.as_deref().or(fallback.filter(|p| p.is_file()));
        let table = path.map(read_config_file).transpose()?;
        Ok(resolve(table.as_ref(), &self.overrides()?)?)
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Prepare {
            input,
            output,
            manifest,
            common,
        } => {
            let config = common.resolve(None)?;
            let out = commands::prepare(&config, &input, &output, manifest.as_deref())?;
            println!("{}", out.display());
        }
        Command::Train { common } => {
            let config = common.resolve(None)?;
            println!("{}", commands::train(&config)?.display());
        }
        Command::Tune { common } => {
            let config = common.resolve(None)?;
            println!("{}", commands::tune(&config)?.display());
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            out,
            common,
        } => {
            if !checkpoint.exists() {
                return Err(CliError::new(
                    error::EXIT_IO,
                    "training",
                    format!("checkpoint not found: {}", checkpoint.display()),
                ));
            }
            let run_config = checkpoint.parent().map(|p| p.join(commands::CONFIG_FILE));
            let mut config = common.resolve(run_config.as_deref())?;
            if let Some(m) = manifest {
                config.test_manifest = Some(m);
            }
            let out = commands::evaluate(&config, &checkpoint, out.as_deref())?;
            eprintln!("report written to {}", out.display());
        }
        Command::Report { runs, out } => {
            print!("{}", commands::report(&runs, out.as_deref())?);
        }
        Command::Keys => {
            for (k, doc) in config::KEYS {
                println!("{k:<16} {doc}");
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command; returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                i32::from(EXIT_CONFIG)
            } else {
                0
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            i32::from(e.code)
        }
    }
}
