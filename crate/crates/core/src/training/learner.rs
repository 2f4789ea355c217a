use ndarray::{Array2, ArrayD, Axis};

use super::{
    argmax_rows, cross_entropy, cross_entropy_grad, Adam, EpochStats, Learner, TrainError,
};
use crate::backbones::ModelAssembly;
use crate::dataset::{BatchStream, DatasetError};
use crate::seed;

/// Trains a [`ModelAssembly`] on batch streams with Adam.
pub struct ModelLearner {
    model: ModelAssembly,
    train: BatchStream,
    val: BatchStream,
    adam: Adam,
    seed: u64,
}

impl ModelLearner {
    pub fn new(
        model: ModelAssembly,
        train: BatchStream,
        val: BatchStream,
        seed: u64,
    ) -> Result<Self, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        if val.is_empty() {
            return Err(TrainError::EmptySplit("val"));
        }
        if !model.trainable_mask().iter().any(|&t| t) {
            return Err(TrainError::NoTrainable);
        }
        let adam = Adam::new(model.store());
        Ok(Self {
            model,
            train,
            val,
            adam,
            seed,
        })
    }

    pub fn model(&self) -> &ModelAssembly {
        &self.model
    }

    pub fn into_model(self) -> ModelAssembly {
        self.model
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.adam.steps()
    }
}

impl Learner for ModelLearner {
    type State = (Vec<ArrayD<f64>>, Vec<ArrayD<f64>>);

    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<EpochStats, TrainError> {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (b, batch) in self.train.epoch(epoch).enumerate() {
            if batch.is_empty() {
                continue;
            }
            let mut rng = seed::rng(self.seed, &[0x4452_4f50, epoch as u64, b as u64]);
            let pass = self.model.forward_train(&batch.inputs, &mut rng)?;
            let (loss, grad) = cross_entropy_grad(pass.logits.view(), &batch.labels)?;
            if !loss.is_finite() || pass.logits.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: Some(b),
                    phase: "training",
                });
            }
            correct += argmax_rows(pass.logits.view())
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
            self.model.store_mut().zero_grads();
            self.model.backward(pass, &grad);
            self.adam.step(self.model.store_mut(), lr);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        if seen == 0 {
            return Err(TrainError::Data(DatasetError::Invalid(
                "no readable training images".into(),
            )));
        }
        Ok(EpochStats {
            loss: loss_sum / seen as f64,
            top1: correct as f64 / seen as f64,
        })
    }

    fn validate(&mut self, epoch: usize) -> Result<EpochStats, TrainError> {
        let (logits, labels) = predict(&self.model, &self.val, epoch)?;
        if labels.is_empty() {
            return Err(TrainError::Data(DatasetError::Invalid(
                "no readable validation images".into(),
            )));
        }
        let loss = cross_entropy(logits.view(), &labels)?;
        let correct = argmax_rows(logits.view())
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok(EpochStats {
            loss,
            top1: correct as f64 / labels.len() as f64,
        })
    }

    fn snapshot(&self) -> Self::State {
        self.model.store().snapshot()
    }

    fn restore(&mut self, state: &Self::State) {
        self.model.store_mut().restore(state);
    }
}

/// Eval-mode logits and labels for every readable sample of `stream`, in
/// stream order.
pub fn predict(
    model: &ModelAssembly,
    stream: &BatchStream,
    epoch: usize,
) -> Result<(Array2<f64>, Vec<usize>), TrainError> {
    let mut logits = Array2::zeros((0, model.output_classes()));
    let mut labels = Vec::with_capacity(stream.len());
    for batch in stream.epoch(epoch) {
        if batch.is_empty() {
            continue;
        }
        let out = model.logits(&batch.inputs)?;
        for row in out.axis_iter(Axis(0)) {
            logits.push_row(row).expect("fixed class count");
        }
        labels.extend_from_slice(&batch.labels);
    }
    Ok((logits, labels))
}
