use std::path::{Path, PathBuf};
use std::sync::Arc;

use asana_core::backbones::ModelAssembly;
use asana_core::dataset::{
    build_hierarchy, parse_manifest, split_train_val, BatchStream, FsSource, ImageSource,
    LabeledSample, StreamOptions,
};
use asana_core::evalreport::{
    aggregate_reports, emit_report, evaluate as evaluate_logits, format_row, TableRow,
};
use asana_core::imageprep::{prepare_dir, prepared_path};
use asana_core::training::{
    fit, load_checkpoint, predict, save_checkpoint, ModelLearner, RunHistory, HISTORY_FILE,
};
use asana_core::tuner::{random_search, ModelTrialRunner, SearchOptions, SearchSpace};

use crate::config::{ConfigError, RunConfig};
use crate::error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING};

pub const DEVICE_VAR: &str = "ASANA_DEVICE";
pub const CONFIG_FILE: &str = "config.toml";
pub const VERSION_FILE: &str = "VERSION";
pub const SPLIT_FILE: &str = "split.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const LEADERBOARD_FILE: &str = "leaderboard.csv";
pub const BEST_CONFIG_FILE: &str = "best_config.toml";
pub const EVAL_DIR: &str = "eval";

/// Only the CPU is supported; anything else in [`DEVICE_VAR`] is refused.
pub fn check_device() -> Result<(), CliError> {
    match std::env::var(DEVICE_VAR) {
        Err(_) => Ok(()),
        Ok(d) if d.is_empty() || d.eq_ignore_ascii_case("cpu") => Ok(()),
        Ok(d) => Err(CliError::new(
            EXIT_CONFIG,
            "cli",
            format!("{DEVICE_VAR}={d}: only `cpu` is available in this build"),
        )),
    }
}

pub fn version_stamp() -> String {
    format!("asana {}\n", env!("CARGO_PKG_VERSION"))
}

/// Creates `<runs_dir>/<timestamp>_<command>_<name>`, adding a numeric suffix
/// when that name is taken; existing directories are never reused.
pub fn create_run_dir(runs_dir: &Path, command: &str, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(runs_dir).map_err(|e| CliError::io(runs_dir, e))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{stamp}_{command}_{name}");
    for n in 0.. {
        let dir = runs_dir.join(if n == 0 {
            base.clone()
        } else {
            format!("{base}-{n}")
        });
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
    unreachable!("unbounded suffix search")
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// New run directory holding the resolved config and version stamp.
fn start_run(config: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    check_device()?;
    let dir = create_run_dir(&config.runs_dir, command, &config.run_name)?;
    write(
        &dir.join(CONFIG_FILE),
        &format!("# {}{}", version_stamp(), config.to_toml()),
    )?;
    write(&dir.join(VERSION_FILE), &version_stamp())?;
    log::info!("run directory {}", dir.display());
    Ok(dir)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| {
        ConfigError {
            key: key.into(),
            reason: "required for this command".into(),
        }
        .into()
    })
}

fn load_samples(
    config: &RunConfig,
    manifest: &Path,
) -> Result<(Vec<LabeledSample>, Arc<dyn ImageSource>), CliError> {
    let root = config.image_root(manifest);
    let parsed = parse_manifest(manifest, Some(&root))?;
    for s in &parsed.skipped {
        log::warn!(
            "{}:{}: skipped {} ({})",
            manifest.display(),
            s.line,
            s.image_path,
            s.reason
        );
    }
    if parsed.samples.is_empty() {
        return Err(CliError::new(
            EXIT_DATA,
            "dataset",
            format!(
                "{}: no usable samples (root {})",
                manifest.display(),
                root.display()
            ),
        ));
    }
    Ok((parsed.samples, Arc::new(FsSource::new(root))))
}

fn streams(config: &RunConfig, dir: &Path) -> Result<(BatchStream, BatchStream), CliError> {
    let manifest = required(&config.train_manifest, "train_manifest")?;
    let (samples, source) = load_samples(config, manifest)?;
    let split = split_train_val(&samples, config.val_fraction, config.train.seed)?;
    split.record().save(&dir.join(SPLIT_FILE))?;
    log::info!(
        "{} train / {} validation samples",
        split.train.len(),
        split.val.len()
    );
    let eval = StreamOptions {
        workers: config.workers,
        ..StreamOptions::eval(config.train.batch_size, config.prep.clone())
    };
    let train = BatchStream::new(
        split.train,
        source.clone(),
        StreamOptions {
            shuffle: true,
            seed: config.train.seed,
            augment: config.augment_params(),
            ..eval.clone()
        },
    )?;
    let val = BatchStream::new(split.val, source, eval)?;
    Ok((train, val))
}

/// Trains one model; returns the run directory.
pub fn train(config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = start_run(config, "train")?;
    let (train, val) = streams(config, &dir)?;
    let model = ModelAssembly::build(&config.assembly_spec())?;
    log::info!(
        "{} ({} trainable of {} parameters), freeze {}, head [{}]",
        config.backbone.family.display_name(),
        model.trainable_count(),
        model.plan().parameter_count(),
        config.freeze_policy(),
        model.spec().head.describe()
    );
    let mut learner = ModelLearner::new(model, train, val, config.train.seed)?;
    let checkpoint = dir.join(CHECKPOINT_DIR);
    let mut so_far = RunHistory::default();
    let mut save_err = None;
    let outcome = fit(&mut learner, &config.train, |record, improved, l| {
        so_far.push(*record);
        let r = so_far.save(&dir.join(HISTORY_FILE)).and_then(|_| {
            if improved {
                save_checkpoint(&checkpoint, l.model(), &so_far)
            } else {
                Ok(())
            }
        });
        if let Err(e) = r {
            save_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = save_err {
        return Err(e.into());
    }
    save_checkpoint(&checkpoint, learner.model(), &outcome.history)?;
    outcome.history.save(&dir.join(HISTORY_FILE))?;
    log::info!(
        "best epoch {} (val loss {:.4}){}",
        outcome.best_epoch,
        outcome.best_val_loss,
        if outcome.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    Ok(dir)
}

/// Random search; returns the run directory.
pub fn tune(config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = start_run(config, "tune")?;
    let space = match &config.space_file {
        Some(p) => SearchSpace::load(p)?,
        None => SearchSpace::default(),
    };
    let (train, val) = streams(config, &dir)?;
    let runner = ModelTrialRunner {
        backbone: config.backbone.clone(),
        head_seed: config.train.seed,
        train,
        val,
    };
    let options = SearchOptions {
        n_trials: config.trials,
        budget_epochs: config.budget_epochs,
        seed: config.train.seed,
        parallel: config.tune_parallel,
    };
    let board = random_search(&space, &options, &config.train, &runner)?;
    write(&dir.join(LEADERBOARD_FILE), &board.to_csv())?;
    let Some((trial, train)) = board.best_train_config(&config.train) else {
        return Err(CliError::new(
            EXIT_TRAINING,
            "tuner",
            "every trial failed; no best configuration",
        ));
    };
    let best = RunConfig {
        head: trial.head,
        freeze: Some(trial.freeze),
        train,
        ..config.clone()
    };
    write(
        &dir.join(BEST_CONFIG_FILE),
        &format!("# {}{}", version_stamp(), best.to_toml()),
    )?;
    Ok(dir)
}

/// Evaluates a checkpoint on a manifest; writes the report into `out` and
/// returns it.
pub fn evaluate(
    config: &RunConfig,
    checkpoint: &Path,
    out: Option<&Path>,
) -> Result<PathBuf, CliError> {
    check_device()?;
    let (model, history) = load_checkpoint(checkpoint, None)?;
    let manifest = required(&config.test_manifest, "test_manifest")?;
    let (samples, source) = load_samples(config, manifest)?;
    let hierarchy = build_hierarchy(&samples)?;
    let stream = BatchStream::new(
        samples,
        source,
        StreamOptions {
            workers: config.workers,
            ..StreamOptions::eval(config.train.batch_size, config.prep.clone())
        },
    )?;
    let (logits, labels) = predict(&model, &stream, 0)?;
    let name = model.spec().backbone.family.display_name();
    let report = evaluate_logits(name, logits.view(), &labels, Some(&hierarchy))?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| {
        checkpoint
            .parent()
            .map(|p| p.join(EVAL_DIR))
            .unwrap_or_else(|| PathBuf::from(EVAL_DIR))
    });
    let summary = emit_report(&report, &history, &out)?;
    for n in &summary.notices {
        eprintln!("note: {n}");
    }
    println!("{}", format_row(&TableRow::from(&report)));
    Ok(out)
}

/// Comparison table over stored metric records.
pub fn report(paths: &[PathBuf], out: Option<&Path>) -> Result<String, CliError> {
    let table = aggregate_reports(paths)?;
    if let Some(out) = out {
        write(out, &table)?;
    }
    Ok(table)
}

/// Runs the enhancement chain over a directory. With `manifest`, also writes
/// a copy of that label manifest pointing at the prepared files.
pub fn prepare(
    config: &RunConfig,
    input: &Path,
    output: &Path,
    manifest: Option<&Path>,
) -> Result<PathBuf, CliError> {
    check_device()?;
    let summary = prepare_dir(input, output, &config.prep, config.workers)?;
    log::info!(
        "{} images prepared, {} skipped",
        summary.files.len(),
        summary.skipped.len()
    );
    if let Some(m) = manifest {
        let text = std::fs::read_to_string(m).map_err(|e| CliError::io(m, e))?;
        let mut rewritten = String::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once(',') {
                Some((path, labels)) => {
                    let p = prepared_path(Path::new(path));
                    rewritten.push_str(&format!("{},{labels}\n", p.display()));
                }
                None => rewritten.push_str(&format!("{line}\n")),
            }
        }
        let name = m
            .file_name()
            .ok_or_else(|| CliError::new(EXIT_CONFIG, "cli", "manifest path has no file name"))?;
        write(&output.join(name), &rewritten)?;
    }
    Ok(output.to_path_buf())
}
