use std::sync::Arc;

use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;

use super::{DatasetError, ImageSource, LabeledSample};
use crate::imageprep::{augment, preprocess, to_tensor, AugmentParams, PrepParams};
use crate::{par, seed};

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub prep: PrepParams,
    /// Only set for training streams.
    pub augment: Option<AugmentParams>,
    /// Image-loading workers; 0 uses the global pool.
    pub workers: usize,
}

impl StreamOptions {
    pub fn eval(batch_size: usize, prep: PrepParams) -> Self {
        Self {
            batch_size,
            shuffle: false,
            seed: 0,
            prep,
            augment: None,
            workers: 0,
        }
    }
}

/// A batch of `(B, S, S, 3)` normalized tensors with their leaf labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array4<f64>,
    pub labels: Vec<usize>,
    pub ids: Vec<usize>,
    /// Samples of this batch dropped because they could not be read.
    pub skipped: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Epoch-wise batch producer. Loading runs on a worker pool but batches and
/// the samples inside them always come out in the planned order.
#[derive(Clone)]
pub struct BatchStream {
    samples: Vec<LabeledSample>,
    source: Arc<dyn ImageSource>,
    opts: StreamOptions,
    pool: par::Pool,
}

impl std::fmt::Debug for BatchStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchStream")
            .field("samples", &self.samples.len())
            .field("opts", &self.opts)
            .finish()
    }
}

impl BatchStream {
    pub fn new(
        samples: Vec<LabeledSample>,
        source: Arc<dyn ImageSource>,
        opts: StreamOptions,
    ) -> Result<Self, DatasetError> {
        if opts.batch_size == 0 {
            return Err(DatasetError::Invalid("batch_size must be >= 1".into()));
        }
        opts.prep
            .validate()
            .map_err(|e| DatasetError::Invalid(e.to_string()))?;
        if let Some(aug) = &opts.augment {
            aug.validate()
                .map_err(|e| DatasetError::Invalid(e.to_string()))?;
        }
        let pool = par::Pool::new(opts.workers);
        Ok(Self {
            samples,
            source,
            opts,
            pool,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn options(&self) -> &StreamOptions {
        &self.opts
    }

    pub fn num_batches(&self) -> usize {
        self.samples.len().div_ceil(self.opts.batch_size)
    }

    /// Visiting order for `epoch`, as indices into [`Self::samples`].
    pub fn order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        if self.opts.shuffle {
            order.shuffle(&mut seed::rng(self.opts.seed, &[0x5348_5546, epoch as u64]));
        }
        order
    }

    /// Loads, preprocesses and (for training streams) augments one sample.
    pub fn load(&self, sample: &LabeledSample, epoch: usize) -> Result<Array3<f64>, DatasetError> {
        let to_invalid = |e: crate::imageprep::PrepError| DatasetError::Invalid(e.to_string());
        let raw = self.source.load(sample).map_err(to_invalid)?;
        let mut img = preprocess(&raw, &self.opts.prep).map_err(to_invalid)?;
        if let Some(aug) = &self.opts.augment {
            let mut rng = seed::rng(aug.seed ^ self.opts.seed, &[epoch as u64, sample.id as u64]);
            img = augment(&img, aug, &mut rng).map_err(to_invalid)?;
        }
        Ok(to_tensor(
            &img,
            self.opts.prep.normalize_mean,
            self.opts.prep.normalize_std,
        ))
    }

    pub fn epoch(&self, epoch: usize) -> EpochBatches<'_> {
        EpochBatches {
            stream: self,
            order: self.order(epoch),
            epoch,
            next: 0,
        }
    }

    fn assemble(&self, idx: &[usize], epoch: usize) -> Batch {
        let loaded = self.pool.install(|| {
            par::map_slice(idx, |&i| {
                let s = &self.samples[i];
                (s, self.load(s, epoch))
            })
        });
        let side = self.opts.prep.target_size;
        let mut inputs = Array4::<f64>::zeros((0, side, side, 3));
        let mut labels = Vec::with_capacity(idx.len());
        let mut ids = Vec::with_capacity(idx.len());
        let mut skipped = 0;
        for (s, res) in loaded {
            match res {
                Ok(t) => {
                    inputs
                        .push(Axis(0), t.view())
                        .expect("tensor shape fixed by target_size");
                    labels.push(s.l3);
                    ids.push(s.id);
                }
                Err(e) => {
                    log::warn!("skipping sample {} ({}): {e}", s.id, s.image_path);
                    skipped += 1;
                }
            }
        }
        Batch {
            inputs,
            labels,
            ids,
            skipped,
        }
    }
}

pub struct EpochBatches<'a> {
    stream: &'a BatchStream,
    order: Vec<usize>,
    epoch: usize,
    next: usize,
}

impl Iterator for EpochBatches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.stream.opts.batch_size).min(self.order.len());
        let batch = self
            .stream
            .assemble(&self.order[self.next..end], self.epoch);
        self.next = end;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MemorySource;
    use crate::imageprep::RawImage;

    fn fixture(n: usize) -> (Vec<LabeledSample>, Arc<dyn ImageSource>) {
        let mut src = MemorySource::new();
        let samples = (0..n)
            .map(|i| {
                let path = format!("c{}/{i}.png", i % 3);
                src.insert(path.clone(), RawImage::filled(6, 6, [i as u8 * 10, 0, 0]));
                LabeledSample {
                    id: i,
                    image_path: path,
                    l1: 0,
                    l2: 0,
                    l3: i % 3,
                }
            })
            .collect();
        (samples, Arc::new(src))
    }

    fn opts(batch: usize, shuffle: bool) -> StreamOptions {
        StreamOptions {
            batch_size: batch,
            shuffle,
            seed: 5,
            prep: PrepParams {
                target_size: 4,
                ..PrepParams::default()
            },
            augment: None,
            workers: 2,
        }
    }

    #[test]
    fn batch_sizes_follow_ceiling_division() {
        let (samples, src) = fixture(10);
        let stream = BatchStream::new(samples, src, opts(4, false)).unwrap();
        let sizes: Vec<_> = stream.epoch(0).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(stream.num_batches(), 3);
        let b = stream.epoch(0).next().unwrap();
        assert_eq!(b.inputs.dim(), (4, 4, 4, 3));
    }

    #[test]
    fn unshuffled_is_manifest_order() {
        let (samples, src) = fixture(7);
        let stream = BatchStream::new(samples, src, opts(3, false)).unwrap();
        let ids: Vec<_> = stream.epoch(4).flat_map(|b| b.ids).collect();
        assert_eq!(ids, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn shuffled_epochs_are_permutations_and_reproducible() {
        let (samples, src) = fixture(23);
        let a = BatchStream::new(samples.clone(), src.clone(), opts(5, true)).unwrap();
        let b = BatchStream::new(samples, src, opts(5, true)).unwrap();
        let e0: Vec<_> = a.epoch(0).flat_map(|b| b.ids).collect();
        let e1: Vec<_> = a.epoch(1).flat_map(|b| b.ids).collect();
        assert_eq!(e0, b.epoch(0).flat_map(|b| b.ids).collect::<Vec<_>>());
        assert_ne!(e0, e1);
        let mut sorted = e0.clone();
        sorted.sort();
        assert_eq!(sorted, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn unreadable_samples_are_skipped() {
        let (mut samples, src) = fixture(5);
        samples[2].image_path = "gone.png".into();
        let stream = BatchStream::new(samples, src, opts(5, false)).unwrap();
        let b = stream.epoch(0).next().unwrap();
        assert_eq!((b.len(), b.skipped), (4, 1));
        assert_eq!(b.ids, vec![0, 1, 3, 4]);
    }

    #[test]
    fn zero_batch_rejected() {
        let (samples, src) = fixture(2);
        assert!(BatchStream::new(samples, src, opts(0, false)).is_err());
    }
}
