use ndarray::{ArrayD, Zip};

use crate::nn::ParamStore;

/// Exponential learning-rate decay: `lr0 · gamma^epoch`.
pub fn lr_schedule(epoch: usize, lr0: f64, gamma: f64) -> f64 {
    lr0 * gamma.powi(epoch as i32)
}

/// Adaptive-moment optimizer touching only mask-true parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .values()
                .iter()
                .map(|p| ArrayD::zeros(p.raw_dim()))
                .collect()
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update with the gradients currently stored.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (values, grads, mask) = store.update_parts();
        for (i, p) in values.iter_mut().enumerate() {
            if !mask[i] {
                continue;
            }
            Zip::from(p)
                .and(&grads[i])
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 0.01, 0.95), 0.01);
        assert!((lr_schedule(10, 0.01, 0.95) - 0.005_987_369_392_383_789).abs() < 1e-15);
        assert!((0..50).all(|e| lr_schedule(e, 0.3, 1.0) == 0.3));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store =
            ParamStore::from_parts(vec![ArrayD::from_elem(IxDyn(&[3]), 1.0); 2], vec![]);
        store.set_trainable(&[true, false]);
        let mut adam = Adam::new(&store);
        let (_, grads, _) = store.backward_parts();
        grads[0].assign(&ndarray::arr1(&[2.0, -0.5, 0.0]).into_dyn());
        grads[1].fill(1.0);
        adam.step(&mut store, 0.1);
        let p = store.values()[0].as_slice().unwrap();
        // bias-corrected first step is lr · sign(g) (up to eps)
        assert!((p[0] - 0.9).abs() < 1e-8 && (p[1] - 1.1).abs() < 1e-8 && p[2] == 1.0);
        assert!(store.values()[1].iter().all(|&v| v == 1.0));
    }
}
