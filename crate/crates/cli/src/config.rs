//! Flat `key = value` configuration with a fixed key registry. Layers resolve
//! as defaults, then the config file, then command-line overrides.

use std::path::{Path, PathBuf};

use asana_core::backbones::{
    apply_freeze, build_plan, ArchVariant, AssemblySpec, BackboneSpec, Family, FreezePolicy,
    HeadConfig, WeightSource,
};
use asana_core::imageprep::{AugmentParams, PrepError, PrepParams};
use asana_core::training::{TrainConfig, TrainError};
use asana_core::tuner::{DEFAULT_BUDGET_EPOCHS, DEFAULT_TRIALS};
use thiserror::Error;
use toml::Value;

#[derive(Debug, Error, PartialEq)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

fn cerr(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    (
        "family",
        "backbone family: vgg16, resnet50, resnet101, densenet121",
    ),
    (
        "weights",
        "backbone parameters: seeded:<n> or a weight manifest path",
    ),
    (
        "variant",
        "architecture size: full or stub (reduced width/depth for desk runs)",
    ),
    (
        "freeze",
        "default (per family), full_finetune, last_stage_only or last_n_layers:<n>",
    ),
    (
        "head",
        "hidden head blocks as units@dropout joined by '-', or none",
    ),
    ("max_epochs", "epoch cap"),
    ("batch_size", "samples per optimizer step"),
    ("lr0", "initial learning rate"),
    ("decay_gamma", "per-epoch learning-rate factor"),
    (
        "patience",
        "epochs without validation-loss improvement before stopping",
    ),
    (
        "min_delta",
        "smallest decrease that counts as an improvement",
    ),
    (
        "seed",
        "seed for splits, shuffling, augmentation, head init and dropout",
    ),
    (
        "contrast_factor",
        "contrast enhancement factor (1 = identity)",
    ),
    (
        "sharpen_enabled",
        "apply the 3x3 sharpen after the median filter",
    ),
    (
        "enhance",
        "run contrast/median/sharpen (off for images written by prepare)",
    ),
    ("target_size", "square input side in pixels"),
    (
        "normalize_mean",
        "per-channel mean subtracted after scaling to [0, 1]",
    ),
    ("normalize_std", "per-channel std divided after the mean"),
    ("augment", "random rotation/zoom/shear on training images"),
    ("rotation_range", "rotation bound in degrees"),
    ("zoom_range", "zoom factor interval [lo, hi]"),
    ("shear_range", "shear bound in degrees"),
    (
        "data_root",
        "directory manifest paths are relative to (default: the manifest's directory)",
    ),
    ("train_manifest", "manifest split into train and validation"),
    ("test_manifest", "held-out manifest for evaluate"),
    (
        "val_fraction",
        "validation share of each leaf class, in (0, 1)",
    ),
    ("runs_dir", "parent directory of run directories"),
    ("run_name", "suffix of run directory names"),
    ("workers", "image-loading threads (0 = all cores)"),
    ("trials", "random-search trials"),
    ("budget_epochs", "epoch budget per trial"),
    (
        "space_file",
        "search-space TOML file (empty = built-in space)",
    ),
    ("tune_parallel", "run trials concurrently"),
];

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backbone: BackboneSpec,
    /// `None` uses the family default.
    pub freeze: Option<FreezePolicy>,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub prep: PrepParams,
    pub augment_enabled: bool,
    pub augment: AugmentParams,
    pub data_root: Option<PathBuf>,
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub val_fraction: f64,
    pub runs_dir: PathBuf,
    pub run_name: String,
    pub workers: usize,
    pub trials: usize,
    pub budget_epochs: usize,
    pub space_file: Option<PathBuf>,
    pub tune_parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneSpec::new(Family::Densenet121),
            freeze: None,
            head: HeadConfig::default(),
            train: TrainConfig::default(),
            prep: PrepParams::default(),
            augment_enabled: true,
            augment: AugmentParams::default(),
            data_root: None,
            train_manifest: None,
            test_manifest: None,
            val_fraction: 0.1,
            runs_dir: PathBuf::from("runs"),
            run_name: "run".into(),
            workers: 0,
            trials: DEFAULT_TRIALS,
            budget_epochs: DEFAULT_BUDGET_EPOCHS,
            space_file: None,
            tune_parallel: false,
        }
    }
}

fn usize_of(key: &str, v: &Value) -> Result<usize, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(cerr(
            key,
            format!("expected a non-negative integer, got {v}"),
        )),
    }
}

fn f64_of(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(cerr(key, format!("expected a number, got {v}"))),
    }
}

fn bool_of(key: &str, v: &Value) -> Result<bool, ConfigError> {
    match v {
        Value::Boolean(b) => Ok(*b),
        Value::String(s) => match s.to_ascii_lowercase().as_str() {
            "on" | "yes" | "true" => Ok(true),
            "off" | "no" | "false" => Ok(false),
            _ => Err(cerr(
                key,
                format!("expected true/false or on/off, got `{s}`"),
            )),
        },
        _ => Err(cerr(key, format!("expected a boolean, got {v}"))),
    }
}

fn str_of(key: &str, v: &Value) -> Result<String, ConfigError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Integer(_) | Value::Float(_) | Value::Boolean(_) => Ok(v.to_string()),
        _ => Err(cerr(key, format!("expected a string, got {v}"))),
    }
}

fn path_of(key: &str, v: &Value) -> Result<Option<PathBuf>, ConfigError> {
    let s = str_of(key, v)?;
    Ok((!s.is_empty()).then(|| PathBuf::from(s)))
}

fn floats_of<const N: usize>(key: &str, v: &Value) -> Result<[f64; N], ConfigError> {
    let items = v
        .as_array()
        .ok_or_else(|| cerr(key, format!("expected an array of {N} numbers, got {v}")))?;
    if items.len() != N {
        return Err(cerr(
            key,
            format!("expected {N} numbers, got {}", items.len()),
        ));
    }
    let mut out = [0.0; N];
    for (o, item) in out.iter_mut().zip(items) {
        *o = f64_of(key, item)?;
    }
    Ok(out)
}

fn path_value(p: &Option<PathBuf>) -> Value {
    Value::String(
        p.as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    )
}

fn floats_value(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&f| Value::Float(f)).collect())
}

/// Parses `512@0.2-256@0` (or `none`).
pub fn parse_head(s: &str) -> Result<HeadConfig, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(HeadConfig::default());
    }
    let blocks = s
        .split('-')
        .map(|b| {
            let (u, d) = b.split_once('@').unwrap_or((b, "0"));
            let units = u
                .trim()
                .parse::<usize>()
                .map_err(|_| format!("bad unit count `{u}`"))?;
            let dropout = d
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("bad dropout `{d}`"))?;
            Ok((units, dropout))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let head = HeadConfig::with_blocks(&blocks);
    head.validate().map_err(|e| e.to_string())?;
    Ok(head)
}

pub fn head_string(head: &HeadConfig) -> String {
    if head.blocks.is_empty() {
        "none".into()
    } else {
        head.describe()
    }
}

fn parse_variant(s: &str) -> Result<ArchVariant, String> {
    match s {
        "full" => Ok(ArchVariant::FULL),
        "stub" => Ok(ArchVariant::STUB),
        _ => Err(format!("expected full or stub, got `{s}`")),
    }
}

fn variant_string(v: ArchVariant) -> String {
    if v == ArchVariant::STUB {
        "stub".into()
    } else if v.is_full() {
        "full".into()
    } else {
        format!("{}x{:?}", v.width_divisor, v.max_blocks)
    }
}

/// Reads a command-line value: TOML syntax when it parses, otherwise the raw
/// text as a string.
pub fn parse_flag_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl RunConfig {
    /// Sets one key; unknown keys and ill-typed values are errors naming the key.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), ConfigError> {
        fn map<T>(key: &str, r: Result<T, String>) -> Result<T, ConfigError> {
            r.map_err(|e| cerr(key, e))
        }
        match key {
            "family" => {
                self.backbone.family = map(
                    key,
                    str_of(key, v)?.parse::<Family>().map_err(|e| e.to_string()),
                )?
            }
            "weights" => self.backbone.weights = str_of(key, v)?,
            "variant" => self.backbone.variant = map(key, parse_variant(&str_of(key, v)?))?,
            "freeze" => {
                let s = str_of(key, v)?;
                self.freeze = if s == "default" {
                    None
                } else {
                    Some(map(
                        key,
                        s.parse::<FreezePolicy>().map_err(|e| e.to_string()),
                    )?)
                }
            }
            "head" => self.head = map(key, parse_head(&str_of(key, v)?))?,
            "max_epochs" => self.train.max_epochs = usize_of(key, v)?,
            "batch_size" => self.train.batch_size = usize_of(key, v)?,
            "lr0" => self.train.lr0 = f64_of(key, v)?,
            "decay_gamma" => self.train.decay_gamma = f64_of(key, v)?,
            "patience" => self.train.patience = usize_of(key, v)?,
            "min_delta" => self.train.min_delta = f64_of(key, v)?,
            "seed" => self.train.seed = usize_of(key, v)? as u64,
            "contrast_factor" => self.prep.contrast_factor = f64_of(key, v)?,
            "sharpen_enabled" => self.prep.sharpen_enabled = bool_of(key, v)?,
            "enhance" => self.prep.enhance = bool_of(key, v)?,
            "target_size" => self.prep.target_size = usize_of(key, v)?,
            "normalize_mean" => self.prep.normalize_mean = floats_of(key, v)?,
            "normalize_std" => self.prep.normalize_std = floats_of(key, v)?,
            "augment" => self.augment_enabled = bool_of(key, v)?,
            "rotation_range" => self.augment.rotation_range = f64_of(key, v)?,
            "zoom_range" => {
                let [lo, hi] = floats_of(key, v)?;
                self.augment.zoom_range = (lo, hi);
            }
            "shear_range" => self.augment.shear_range = f64_of(key, v)?,
            "data_root" => self.data_root = path_of(key, v)?,
            "train_manifest" => self.train_manifest = path_of(key, v)?,
            "test_manifest" => self.test_manifest = path_of(key, v)?,
            "val_fraction" => self.val_fraction = f64_of(key, v)?,
            "runs_dir" => self.runs_dir = path_of(key, v)?.unwrap_or_else(|| PathBuf::from("runs")),
            "run_name" => self.run_name = str_of(key, v)?,
            "workers" => self.workers = usize_of(key, v)?,
            "trials" => self.trials = usize_of(key, v)?,
            "budget_epochs" => self.budget_epochs = usize_of(key, v)?,
            "space_file" => self.space_file = path_of(key, v)?,
            "tune_parallel" => self.tune_parallel = bool_of(key, v)?,
            _ => return Err(cerr(key, "unknown key (`asana keys` lists them)")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let v = match key {
            "family" => Value::String(self.backbone.family.id().into()),
            "weights" => Value::String(self.backbone.weights.clone()),
            "variant" => Value::String(variant_string(self.backbone.variant)),
            "freeze" => Value::String(self.freeze.map_or("default".into(), |f| f.to_string())),
            "head" => Value::String(head_string(&self.head)),
            "max_epochs" => Value::Integer(self.train.max_epochs as i64),
            "batch_size" => Value::Integer(self.train.batch_size as i64),
            "lr0" => Value::Float(self.train.lr0),
            "decay_gamma" => Value::Float(self.train.decay_gamma),
            "patience" => Value::Integer(self.train.patience as i64),
            "min_delta" => Value::Float(self.train.min_delta),
            "seed" => Value::Integer(self.train.seed as i64),
            "contrast_factor" => Value::Float(self.prep.contrast_factor),
            "sharpen_enabled" => Value::Boolean(self.prep.sharpen_enabled),
            "enhance" => Value::Boolean(self.prep.enhance),
            "target_size" => Value::Integer(self.prep.target_size as i64),
            "normalize_mean" => floats_value(&self.prep.normalize_mean),
            "normalize_std" => floats_value(&self.prep.normalize_std),
            "augment" => Value::Boolean(self.augment_enabled),
            "rotation_range" => Value::Float(self.augment.rotation_range),
            "zoom_range" => floats_value(&[self.augment.zoom_range.0, self.augment.zoom_range.1]),
            "shear_range" => Value::Float(self.augment.shear_range),
            "data_root" => path_value(&self.data_root),
            "train_manifest" => path_value(&self.train_manifest),
            "test_manifest" => path_value(&self.test_manifest),
            "val_fraction" => Value::Float(self.val_fraction),
            "runs_dir" => Value::String(self.runs_dir.display().to_string()),
            "run_name" => Value::String(self.run_name.clone()),
            "workers" => Value::Integer(self.workers as i64),
            "trials" => Value::Integer(self.trials as i64),
            "budget_epochs" => Value::Integer(self.budget_epochs as i64),
            "space_file" => path_value(&self.space_file),
            "tune_parallel" => Value::Boolean(self.tune_parallel),
            _ => return None,
        };
        Some(v)
    }

    /// Applies a TOML table; every key must be in the registry.
    pub fn apply_table(&mut self, table: &toml::Table) -> Result<(), ConfigError> {
        for (k, v) in table {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Freeze policy in effect.
    pub fn freeze_policy(&self) -> FreezePolicy {
        self.freeze
            .unwrap_or_else(|| self.backbone.family.default_freeze())
    }

    /// Structure of the model this config trains.
    pub fn assembly_spec(&self) -> AssemblySpec {
        AssemblySpec {
            backbone: self.backbone.clone(),
            freeze: self.freeze_policy(),
            head: self.head.clone(),
            head_seed: self.train.seed,
        }
    }

    /// Augmentation parameters for the training stream, if enabled.
    pub fn augment_params(&self) -> Option<AugmentParams> {
        self.augment_enabled.then(|| AugmentParams {
            seed: self.train.seed,
            ..self.augment.clone()
        })
    }

    /// Checks every module invariant, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.prep.validate().map_err(prep_key)?;
        self.augment.validate().map_err(prep_key)?;
        self.train.validate().map_err(|e| match e {
            TrainError::Config { key, reason } => cerr(key, reason),
            other => cerr("train", other.to_string()),
        })?;
        WeightSource::parse(&self.backbone.weights).map_err(|e| cerr("weights", e.to_string()))?;
        let plan = build_plan(&self.assembly_spec()).map_err(|e| cerr("head", e.to_string()))?;
        apply_freeze(&plan, self.freeze_policy()).map_err(|e| cerr("freeze", e.to_string()))?;
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(cerr("val_fraction", "must lie in (0, 1)"));
        }
        if self.prep.target_size < asana_core::backbones::MIN_INPUT_SIZE {
            return Err(cerr(
                "target_size",
                format!("must be at least {}", asana_core::backbones::MIN_INPUT_SIZE),
            ));
        }
        if self.trials < 1 {
            return Err(cerr("trials", "must be >= 1"));
        }
        if self.budget_epochs < 1 {
            return Err(cerr("budget_epochs", "must be >= 1"));
        }
        if self.run_name.is_empty() || self.run_name.contains(['/', '\\']) {
            return Err(cerr(
                "run_name",
                "must be a non-empty name without path separators",
            ));
        }
        Ok(())
    }

    /// Every key in registry order, re-readable by [`resolve`].
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (key, doc) in KEYS {
            let v = self.get(key).expect("registry keys all have values");
            out.push_str(&format!("# {doc}\n{key} = {v}\n"));
        }
        out
    }

    /// Manifest paths are relative to this directory.
    pub fn image_root(&self, manifest: &Path) -> PathBuf {
        self.data_root
            .clone()
            .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
    }
}

fn prep_key(e: PrepError) -> ConfigError {
    match e {
        PrepError::InvalidParam { name, reason } => cerr(name, reason),
        other => cerr("prep", other.to_string()),
    }
}

/// Parses a config file into a table.
pub fn read_config_file(path: &Path) -> Result<toml::Table, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cerr("config", format!("{}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| cerr("config", format!("{}: {}", path.display(), e.message())))
}

/// Defaults, then `file`, then `overrides` (later entries win). The result is
/// validated before it is returned.
pub fn resolve(
    file: Option<&toml::Table>,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    if let Some(t) = file {
        config.apply_table(t)?;
    }
    for (k, raw) in overrides {
        config.set(k, &parse_flag_value(raw))?;
    }
    config.validate()?;
    Ok(config)
}

/// Splits `key=value`.
pub fn split_assignment(s: &str) -> Result<(String, String), ConfigError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| cerr(s, "expected KEY=VALUE"))
}
