use ndarray::{s, Array4};

use super::{mismatch, Backward, Cache, Forward};

/// Symmetric zero padding of the spatial axes.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPad {
    pub pad: usize,
}

impl ZeroPad {
    pub fn forward(&self, x: Array4<f64>, cx: &mut Forward<'_>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let p = self.pad;
        let mut out = Array4::zeros((n, c, h + 2 * p, w + 2 * p));
        out.slice_mut(s![.., .., p..p + h, p..p + w]).assign(&x);
        cx.record(Cache::Pad);
        out
    }

    pub fn backward(&self, grad: Array4<f64>, cx: &mut Backward<'_>) -> Array4<f64> {
        match cx.pop() {
            Cache::Pad => {}
            other => mismatch("pad", &other),
        }
        let (_, _, h, w) = grad.dim();
        let p = self.pad;
        grad.slice(s![.., .., p..h - p, p..w - p]).to_owned()
    }
}

/// Max pooling without padding (floor output size).
#[derive(Debug, Clone, Copy)]
pub struct MaxPool {
    pub size: usize,
    pub stride: usize,
}

fn pooled(len: usize, size: usize, stride: usize) -> usize {
    assert!(
        len >= size,
        "feature map of {len} smaller than pool window {size}"
    );
    (len - size) / stride + 1
}

impl MaxPool {
    pub fn forward(&self, x: Array4<f64>, cx: &mut Forward<'_>) -> Array4<f64> {
        let x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        let (n, c, h, w) = x.dim();
        let (oh, ow) = (
            pooled(h, self.size, self.stride),
            pooled(w, self.size, self.stride),
        );
        let xs = x.as_slice().expect("standard layout");
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for ky in 0..self.size {
                        for kx in 0..self.size {
                            let idx = base + (oy * self.stride + ky) * w + ox * self.stride + kx;
                            if xs[idx] > best {
                                best = xs[idx];
                                at = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(at);
                }
            }
        }
        if cx.tape.is_some() {
            cx.record(Cache::MaxPool {
                argmax,
                input_dim: (n, c, h, w),
            });
        }
        Array4::from_shape_vec((n, c, oh, ow), out).expect("sized above")
    }

    pub fn backward(&self, grad: Array4<f64>, cx: &mut Backward<'_>) -> Array4<f64> {
        let (argmax, input_dim) = match cx.pop() {
            Cache::MaxPool { argmax, input_dim } => (argmax, input_dim),
            other => mismatch("max pool", &other),
        };
        let mut dx = Array4::<f64>::zeros(input_dim);
        let ds = dx.as_slice_mut().expect("fresh array");
        for (g, &at) in grad.iter().zip(&argmax) {
            ds[at] += g;
        }
        dx
    }
}

/// Average pooling without padding (floor output size).
#[derive(Debug, Clone, Copy)]
pub struct AvgPool {
    pub size: usize,
    pub stride: usize,
}

impl AvgPool {
    pub fn forward(&self, x: Array4<f64>, cx: &mut Forward<'_>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = (
            pooled(h, self.size, self.stride),
            pooled(w, self.size, self.stride),
        );
        let scale = 1.0 / (self.size * self.size) as f64;
        let out = Array4::from_shape_fn((n, c, oh, ow), |(i, ch, oy, ox)| {
            let (y0, x0) = (oy * self.stride, ox * self.stride);
            x.slice(s![i, ch, y0..y0 + self.size, x0..x0 + self.size])
                .sum()
                * scale
        });
        cx.record(Cache::AvgPool {
            input_dim: (n, c, h, w),
        });
        out
    }

    pub fn backward(&self, grad: Array4<f64>, cx: &mut Backward<'_>) -> Array4<f64> {
        let input_dim = match cx.pop() {
            Cache::AvgPool { input_dim } => input_dim,
            other => mismatch("avg pool", &other),
        };
        let scale = 1.0 / (self.size * self.size) as f64;
        let mut dx = Array4::<f64>::zeros(input_dim);
        for ((i, ch, oy, ox), g) in grad.indexed_iter() {
            let (y0, x0) = (oy * self.stride, ox * self.stride);
            dx.slice_mut(s![i, ch, y0..y0 + self.size, x0..x0 + self.size])
                .mapv_inplace(|v| v + g * scale);
        }
        dx
    }
}
