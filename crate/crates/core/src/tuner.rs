//! Seeded random search over head architectures, initial learning rate and
//! freeze policy. Every trial is a short fit; trials are ranked by validation
//! loss.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbones::{
    AssemblySpec, BackboneSpec, FreezePolicy, HeadBlockSpec, HeadConfig, ModelAssembly,
    DROPOUT_CHOICES, MAX_HEAD_BLOCKS, NUM_CLASSES, UNITS_CHOICES,
};
use crate::dataset::BatchStream;
use crate::training::{fit, FitOutcome, ModelLearner, RunHistory, TrainConfig, TrainError};
use crate::{par, seed};

pub const DEFAULT_TRIALS: usize = 12;
pub const DEFAULT_BUDGET_EPOCHS: usize = 20;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid search space `{key}`: {reason}")]
    Space { key: &'static str, reason: String },
    #[error("invalid search option `{key}`: {reason}")]
    Options { key: &'static str, reason: String },
    #[error("trial {id}: {source}")]
    Trial {
        id: usize,
        #[source]
        source: TrainError,
    },
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
}

/// Choice sets the search draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub block_counts: Vec<usize>,
    pub units_choices: Vec<usize>,
    pub dropout_choices: Vec<f64>,
    pub lr0_choices: Vec<f64>,
    pub freeze_choices: Vec<FreezePolicy>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            block_counts: (0..=MAX_HEAD_BLOCKS).collect(),
            units_choices: UNITS_CHOICES.to_vec(),
            dropout_choices: DROPOUT_CHOICES.to_vec(),
            lr0_choices: vec![1e-2, 1e-3, 1e-4],
            freeze_choices: vec![FreezePolicy::FullFinetune, FreezePolicy::LastStageOnly],
        }
    }
}

/// On-disk form of a space; absent keys keep their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    block_counts: Option<Vec<usize>>,
    units_choices: Option<Vec<usize>>,
    dropout_choices: Option<Vec<f64>>,
    lr0_choices: Option<Vec<f64>>,
    freeze_choices: Option<Vec<String>>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), TuneError> {
        let err = |key, reason: String| Err(TuneError::Space { key, reason });
        if self.block_counts.is_empty() {
            return err("block_counts", "empty".into());
        }
        if let Some(b) = self.block_counts.iter().find(|&&b| b > MAX_HEAD_BLOCKS) {
            return err("block_counts", format!("{b} exceeds {MAX_HEAD_BLOCKS}"));
        }
        if self.units_choices.is_empty() {
            return err("units_choices", "empty".into());
        }
        if let Some(u) = self
            .units_choices
            .iter()
            .find(|u| !UNITS_CHOICES.contains(u))
        {
            return err(
                "units_choices",
                format!("{u} is not one of {UNITS_CHOICES:?}"),
            );
        }
        if self.dropout_choices.is_empty() {
            return err("dropout_choices", "empty".into());
        }
        if let Some(d) = self
            .dropout_choices
            .iter()
            .find(|d| !DROPOUT_CHOICES.contains(d))
        {
            return err(
                "dropout_choices",
                format!("{d} is not one of {DROPOUT_CHOICES:?}"),
            );
        }
        if self.lr0_choices.is_empty() {
            return err("lr0_choices", "empty".into());
        }
        if let Some(l) = self
            .lr0_choices
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return err("lr0_choices", format!("{l} is not a positive number"));
        }
        if self.freeze_choices.is_empty() {
            return err("freeze_choices", "empty".into());
        }
        Ok(())
    }

    /// Whether `config` could have been drawn from this space.
    pub fn contains(&self, config: &TrialConfig) -> bool {
        let head = &config.head;
        self.block_counts.contains(&head.blocks.len())
            && head.blocks.iter().all(|b| {
                self.units_choices.contains(&b.units) && self.dropout_choices.contains(&b.dropout)
            })
            && head.output_classes == NUM_CLASSES
            && self.lr0_choices.contains(&config.lr0)
            && self.freeze_choices.contains(&config.freeze)
    }

    /// Parses a TOML space file; absent keys keep the defaults.
    pub fn from_toml(text: &str) -> Result<Self, TuneError> {
        let file: SpaceFile = toml::from_str(text).map_err(|e| TuneError::Space {
            key: "space file",
            reason: e.message().to_string(),
        })?;
        let mut space = Self::default();
        if let Some(v) = file.block_counts {
            space.block_counts = v;
        }
        if let Some(v) = file.units_choices {
            space.units_choices = v;
        }
        if let Some(v) = file.dropout_choices {
            space.dropout_choices = v;
        }
        if let Some(v) = file.lr0_choices {
            space.lr0_choices = v;
        }
        if let Some(v) = file.freeze_choices {
            space.freeze_choices = v
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(|e: crate::backbones::ModelError| TuneError::Space {
                    key: "freeze_choices",
                    reason: e.to_string(),
                })?;
        }
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: &Path) -> Result<Self, TuneError> {
        let text = std::fs::read_to_string(path).map_err(|e| TuneError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text)
    }
}

/// One point of the space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub head: HeadConfig,
    pub lr0: f64,
    pub freeze: FreezePolicy,
}

/// Draws every field independently and uniformly from its choice set. The
/// units and dropout of each block are drawn separately per block.
pub fn sample_config<R: Rng>(space: &SearchSpace, rng: &mut R) -> TrialConfig {
    let pick = |v: &[usize], rng: &mut R| *v.choose(rng).expect("validated non-empty");
    let blocks = pick(&space.block_counts, rng);
    let blocks = (0..blocks)
        .map(|_| HeadBlockSpec {
            units: pick(&space.units_choices, rng),
            dropout: *space
                .dropout_choices
                .choose(rng)
                .expect("validated non-empty"),
        })
        .collect();
    TrialConfig {
        head: HeadConfig {
            blocks,
            output_classes: NUM_CLASSES,
        },
        lr0: *space.lr0_choices.choose(rng).expect("validated non-empty"),
        freeze: *space
            .freeze_choices
            .choose(rng)
            .expect("validated non-empty"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub n_trials: usize,
    pub budget_epochs: usize,
    pub seed: u64,
    /// Run trials concurrently (results do not depend on it).
    pub parallel: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_trials: DEFAULT_TRIALS,
            budget_epochs: DEFAULT_BUDGET_EPOCHS,
            seed: 0,
            parallel: false,
        }
    }
}

/// Patience used inside a trial of `budget` epochs.
pub fn trial_patience(patience: usize, budget: usize) -> usize {
    patience.min(budget / 3).max(1)
}

/// Training config of one trial: the base config with the trial's lr0, the
/// budget as epoch cap and the reduced patience.
pub fn trial_train_config(base: &TrainConfig, config: &TrialConfig, budget: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: budget,
        lr0: config.lr0,
        patience: trial_patience(base.patience, budget),
        ..base.clone()
    }
}

/// Runs one fit for a sampled configuration.
pub trait TrialRunner: Sync {
    fn run(
        &self,
        id: usize,
        config: &TrialConfig,
        train: &TrainConfig,
    ) -> Result<FitOutcome, TrainError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Completed {
        /// Validation loss and top-1 of the restored (best) epoch.
        val_loss: f64,
        val_top1: f64,
        best_epoch: usize,
        epochs_run: usize,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: usize,
    pub config: TrialConfig,
    pub budget_epochs: usize,
    pub status: TrialStatus,
    pub history: Option<RunHistory>,
}

impl Trial {
    pub fn val_loss(&self) -> Option<f64> {
        match self.status {
            TrialStatus::Completed { val_loss, .. } => Some(val_loss),
            TrialStatus::Failed(_) => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, TrialStatus::Failed(_))
    }
}

/// Ranking: completed before failed; then val loss ascending, val top-1
/// descending, id ascending.
pub fn rank_order(a: &Trial, b: &Trial) -> Ordering {
    match (&a.status, &b.status) {
        (
            TrialStatus::Completed {
                val_loss: la,
                val_top1: ta,
                ..
            },
            TrialStatus::Completed {
                val_loss: lb,
                val_top1: tb,
                ..
            },
        ) => la
            .total_cmp(lb)
            .then(tb.total_cmp(ta))
            .then(a.id.cmp(&b.id)),
        (TrialStatus::Completed { .. }, TrialStatus::Failed(_)) => Ordering::Less,
        (TrialStatus::Failed(_), TrialStatus::Completed { .. }) => Ordering::Greater,
        (TrialStatus::Failed(_), TrialStatus::Failed(_)) => a.id.cmp(&b.id),
    }
}

pub const LEADERBOARD_HEADER: &str = "rank,trial_id,status,blocks,head,freeze,lr0,budget_epochs,epochs_run,best_epoch,val_loss,val_top1";

/// Trials in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    pub trials: Vec<Trial>,
}

impl Leaderboard {
    pub fn new(mut trials: Vec<Trial>) -> Self {
        trials.sort_by(rank_order);
        Self { trials }
    }

    pub fn best(&self) -> Option<&Trial> {
        self.trials.first().filter(|t| !t.is_failed())
    }

    /// The winning configuration expanded to a full training config for the
    /// long run: the base config with the trial's lr0.
    pub fn best_train_config(&self, base: &TrainConfig) -> Option<(TrialConfig, TrainConfig)> {
        self.best().map(|t| {
            (
                t.config.clone(),
                TrainConfig {
                    lr0: t.config.lr0,
                    ..base.clone()
                },
            )
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{LEADERBOARD_HEADER}\n");
        for (rank, t) in self.trials.iter().enumerate() {
            let head = if t.config.head.blocks.is_empty() {
                "none".to_string()
            } else {
                t.config.head.describe()
            };
            let (status, rest) = match &t.status {
                TrialStatus::Completed {
                    val_loss,
                    val_top1,
                    best_epoch,
                    epochs_run,
                } => (
                    "completed".to_string(),
                    format!("{epochs_run},{best_epoch},{val_loss:?},{val_top1:?}"),
                ),
                TrialStatus::Failed(why) => (
                    format!("failed: {}", why.replace([',', '\n'], ";")),
                    ",,,".to_string(),
                ),
            };
            let _ = writeln!(
                out,
                "{},{},{status},{},{head},{},{:?},{},{rest}",
                rank + 1,
                t.id,
                t.config.head.blocks.len(),
                t.config.freeze,
                t.config.lr0,
                t.budget_epochs
            );
        }
        out
    }
}

/// Runs `options.n_trials` fits of at most `options.budget_epochs` epochs.
/// Trial `i` samples its config from `seed::rng(options.seed, [i])`, so the
/// configs do not depend on the order trials run in. A trial stopped by a
/// non-finite loss is recorded as failed; any other error aborts the search.
pub fn random_search(
    space: &SearchSpace,
    options: &SearchOptions,
    base: &TrainConfig,
    runner: &dyn TrialRunner,
) -> Result<Leaderboard, TuneError> {
    space.validate()?;
    if options.n_trials < 1 {
        return Err(TuneError::Options {
            key: "n_trials",
            reason: "must be >= 1".into(),
        });
    }
    if options.budget_epochs < 1 {
        return Err(TuneError::Options {
            key: "budget_epochs",
            reason: "must be >= 1".into(),
        });
    }
    let configs: Vec<TrialConfig> = (0..options.n_trials)
        .map(|i| {
            sample_config(
                space,
                &mut seed::rng(options.seed, &[0x5452_4941, i as u64]),
            )
        })
        .collect();
    let run = |id: usize| -> Result<Trial, TuneError> {
        let config = configs[id].clone();
        let train = trial_train_config(base, &config, options.budget_epochs);
        log::info!(
            "trial {id}: head [{}] freeze {} lr0 {}",
            config.head.describe(),
            config.freeze,
            config.lr0
        );
        let (status, history) = match runner.run(id, &config, &train) {
            Ok(out) => {
                let best = out.history.records[out.best_epoch];
                (
                    TrialStatus::Completed {
                        val_loss: best.val_loss,
                        val_top1: best.val_top1,
                        best_epoch: out.best_epoch,
                        epochs_run: out.history.len(),
                    },
                    Some(out.history),
                )
            }
            Err(e @ TrainError::NonFinite { .. }) => {
                log::warn!("trial {id} failed: {e}");
                (TrialStatus::Failed(e.to_string()), None)
            }
            Err(source) => return Err(TuneError::Trial { id, source }),
        };
        Ok(Trial {
            id,
            config,
            budget_epochs: options.budget_epochs,
            status,
            history,
        })
    };
    let trials: Vec<Trial> = if options.parallel {
        par::map_range(options.n_trials, run)
            .into_iter()
            .collect::<Result<_, _>>()?
    } else {
        (0..options.n_trials).map(run).collect::<Result<_, _>>()?
    };
    Ok(Leaderboard::new(trials))
}

/// Trials that train a fresh assembly of one backbone on fixed streams.
pub struct ModelTrialRunner {
    pub backbone: BackboneSpec,
    pub head_seed: u64,
    pub train: BatchStream,
    pub val: BatchStream,
}

impl TrialRunner for ModelTrialRunner {
    fn run(
        &self,
        _id: usize,
        config: &TrialConfig,
        train: &TrainConfig,
    ) -> Result<FitOutcome, TrainError> {
        let spec = AssemblySpec {
            backbone: self.backbone.clone(),
            freeze: config.freeze,
            head: config.head.clone(),
            head_seed: self.head_seed,
        };
        let model = ModelAssembly::build(&spec)?;
        let mut learner =
            ModelLearner::new(model, self.train.clone(), self.val.clone(), train.seed)?;
        fit(&mut learner, train, |_, _, _| {})
    }
}
