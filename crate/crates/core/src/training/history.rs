use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

pub const HISTORY_HEADER: &str = "epoch,lr,train_loss,train_top1,val_loss,val_top1,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_top1: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    /// Wall time of the epoch.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<EpochRecord>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: EpochRecord) {
        if let Some(last) = self.records.last() {
            assert!(r.epoch > last.epoch, "epoch indices must increase");
        }
        self.records.push(r);
    }

    /// Equal in everything except wall time.
    pub fn same_trajectory(&self, other: &RunHistory) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                EpochRecord { seconds: 0.0, ..*a } == EpochRecord { seconds: 0.0, ..*b }
            })
    }

    /// Values are written with Rust's shortest round-trip formatting so a
    /// parse gives back identical floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.epoch, r.lr, r.train_loss, r.train_top1, r.val_loss, r.val_top1, r.seconds
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TrainError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == HISTORY_HEADER => {}
            other => {
                return Err(TrainError::Checkpoint(format!(
                    "history header {other:?} is not `{HISTORY_HEADER}`"
                )))
            }
        }
        let mut history = RunHistory::default();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad =
                |what: &str| TrainError::Checkpoint(format!("history line {}: {what}", n + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let num = |i: usize| {
                f[i].parse::<f64>()
                    .map_err(|_| bad(&format!("bad number `{}`", f[i])))
            };
            let r = EpochRecord {
                epoch: f[0].parse().map_err(|_| bad("bad epoch"))?,
                lr: num(1)?,
                train_loss: num(2)?,
                train_top1: num(3)?,
                val_loss: num(4)?,
                val_top1: num(5)?,
                seconds: num(6)?,
            };
            if history.records.last().is_some_and(|l| r.epoch <= l.epoch) {
                return Err(bad("epoch indices must increase"));
            }
            history.records.push(r);
        }
        Ok(history)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_csv()).map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_csv(&text)
    }
}
