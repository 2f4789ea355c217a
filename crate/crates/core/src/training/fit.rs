use std::time::Instant;

use super::{lr_schedule, EpochRecord, RunHistory, TrainConfig, TrainError};

/// Mean loss and top-1 accuracy over one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub top1: f64,
}

/// Something `fit` can train: the model loop for real runs, scripted traces in tests.
pub trait Learner {
    type State;

    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<EpochStats, TrainError>;
    fn validate(&mut self, epoch: usize) -> Result<EpochStats, TrainError>;
    fn snapshot(&self) -> Self::State;
    fn restore(&mut self, state: &Self::State);
}

/// Tracks the best monitored value and the number of epochs without improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    best: Option<(usize, f64)>,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            wait: 0,
        }
    }

    /// Records `value` for `epoch`; returns whether it improved on the best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        let improved = match self.best {
            None => true,
            Some((_, best)) => value < best - self.min_delta,
        };
        if improved {
            self.best = Some((epoch, value));
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.wait >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub history: RunHistory,
    /// 0-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Epoch loop with scheduled lr, validation after every epoch, best-weights
/// tracking on validation loss and early stopping. The learner ends holding
/// the best weights. `observer` sees every record (and whether it improved).
pub fn fit<L: Learner>(
    learner: &mut L,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, bool, &L),
) -> Result<FitOutcome, TrainError> {
    config.validate()?;
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut history = RunHistory::default();
    let mut best_state = None;
    let mut stopped_early = false;
    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        let lr = lr_schedule(epoch, config.lr0, config.decay_gamma);
        let train = learner.train_epoch(epoch, lr)?;
        let val = learner.validate(epoch)?;
        if !val.loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: None,
                phase: "validation",
            });
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: train.loss,
            train_top1: train.top1,
            val_loss: val.loss,
            val_top1: val.top1,
            seconds: started.elapsed().as_secs_f64(),
        };
        history.push(record);
        let improved = stopper.observe(epoch, val.loss);
        if improved {
            best_state = Some(learner.snapshot());
        }
        log::info!(
            "epoch {epoch}: lr {lr:.6} train loss {:.4} top1 {:.3} | val loss {:.4} top1 {:.3}{}",
            train.loss,
            train.top1,
            val.loss,
            val.top1,
            if improved { " *" } else { "" }
        );
        observer(&record, improved, learner);
        if stopper.should_stop() {
            stopped_early = epoch + 1 < config.max_epochs;
            break;
        }
    }
    let (best_epoch, best_val_loss) = stopper.best().expect("max_epochs >= 1 validated");
    learner.restore(
        best_state
            .as_ref()
            .expect("best state recorded with best epoch"),
    );
    Ok(FitOutcome {
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}
