use ndarray::Array4;

use super::{mismatch, Backward, BufferId, Buffers, Cache, Forward, ParamId, Plan, Role};

/// Per-channel batch normalization.
///
/// Uses batch statistics only in training forwards *and* when its scale is
/// trainable; a frozen layer always normalizes with its running statistics and
/// never updates them.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: BufferId,
    pub var: BufferId,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn register(plan: &mut Plan, layer: usize, channels: usize, eps: f64) -> Self {
        let gamma = plan.add_param(
            layer,
            "gamma",
            vec![channels],
            Role::Gamma,
            channels,
            channels,
        );
        let beta = plan.add_param(
            layer,
            "beta",
            vec![channels],
            Role::Beta,
            channels,
            channels,
        );
        let mean = plan.add_buffer(layer, "moving_mean", vec![channels], 0.0);
        let var = plan.add_buffer(layer, "moving_variance", vec![channels], 1.0);
        Self {
            gamma,
            beta,
            mean,
            var,
            channels,
            eps,
            momentum: 0.99,
        }
    }

    pub fn forward(&self, x: Array4<f64>, cx: &mut Forward<'_>) -> Array4<f64> {
        let mut x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        let (n, c, h, w) = x.dim();
        assert_eq!(
            c, self.channels,
            "norm expects {} channels, got {c}",
            self.channels
        );
        let plane = h * w;
        let count = (n * plane) as f64;
        let batch_stats = cx.train && cx.trainable[self.gamma.0];
        let gamma = &cx.values[self.gamma.0];
        let beta = &cx.values[self.beta.0];

        let (mean, var): (Vec<f64>, Vec<f64>) = if batch_stats {
            let xs = x.as_slice().expect("standard layout");
            (0..c)
                .map(|ch| {
                    let planes = || {
                        (0..n).flat_map(move |i| {
                            xs[(i * c + ch) * plane..(i * c + ch + 1) * plane].iter()
                        })
                    };
                    let m = planes().sum::<f64>() / count;
                    let v = planes().map(|v| (v - m) * (v - m)).sum::<f64>() / count;
                    (m, v)
                })
                .unzip()
        } else {
            let rm = cx.buffers.get(self.mean);
            let rv = cx.buffers.get(self.var);
            (rm.iter().copied().collect(), rv.iter().copied().collect())
        };
        let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let recording = cx.tape.is_some();
        let mut xhat = if recording {
            Some(Array4::<f64>::zeros((n, c, h, w)))
        } else {
            None
        };
        {
            let xs = x.as_slice_mut().expect("standard layout");
            let mut hat = xhat
                .as_mut()
                .map(|a| a.as_slice_mut().expect("fresh array"));
            for i in 0..n {
                for ch in 0..c {
                    let range = (i * c + ch) * plane..(i * c + ch + 1) * plane;
                    let (m, is, gm, bt) = (mean[ch], invstd[ch], gamma[ch], beta[ch]);
                    for k in range {
                        let xh = (xs[k] - m) * is;
                        if let Some(hs) = hat.as_deref_mut() {
                            hs[k] = xh;
                        }
                        xs[k] = gm * xh + bt;
                    }
                }
            }
        }

        if batch_stats {
            if let Buffers::Write(bufs) = &mut cx.buffers {
                let mo = self.momentum;
                for (r, m) in bufs[self.mean.0].iter_mut().zip(&mean) {
                    *r = mo * *r + (1.0 - mo) * m;
                }
                for (r, v) in bufs[self.var.0].iter_mut().zip(&var) {
                    *r = mo * *r + (1.0 - mo) * v;
                }
            }
        }
        if let Some(xhat) = xhat {
            cx.record(Cache::Norm {
                xhat,
                invstd,
                batch_stats,
            });
        }
        x
    }

    pub fn backward(&self, grad: Array4<f64>, cx: &mut Backward<'_>) -> Array4<f64> {
        let (xhat, invstd, batch_stats) = match cx.pop() {
            Cache::Norm {
                xhat,
                invstd,
                batch_stats,
            } => (xhat, invstd, batch_stats),
            other => mismatch("norm", &other),
        };
        let mut grad = if grad.is_standard_layout() {
            grad
        } else {
            grad.as_standard_layout().into_owned()
        };
        let (n, c, h, w) = grad.dim();
        let plane = h * w;
        let count = (n * plane) as f64;
        let hs = xhat.as_slice().expect("fresh array");
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        {
            let gs = grad.as_slice().expect("standard layout");
            for i in 0..n {
                for ch in 0..c {
                    for k in (i * c + ch) * plane..(i * c + ch + 1) * plane {
                        sum_g[ch] += gs[k];
                        sum_gx[ch] += gs[k] * hs[k];
                    }
                }
            }
        }
        if cx.trainable[self.gamma.0] {
            for (d, v) in cx.grads[self.gamma.0].iter_mut().zip(&sum_gx) {
                *d += v;
            }
        }
        if cx.trainable[self.beta.0] {
            for (d, v) in cx.grads[self.beta.0].iter_mut().zip(&sum_g) {
                *d += v;
            }
        }
        let gamma = &cx.values[self.gamma.0];
        let gs = grad.as_slice_mut().expect("standard layout");
        for i in 0..n {
            for ch in 0..c {
                let scale = gamma[ch] * invstd[ch];
                for k in (i * c + ch) * plane..(i * c + ch + 1) * plane {
                    gs[k] = if batch_stats {
                        scale * (gs[k] - sum_g[ch] / count - hs[k] * sum_gx[ch] / count)
                    } else {
                        scale * gs[k]
                    };
                }
            }
        }
        grad
    }
}
