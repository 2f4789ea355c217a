use ndarray::{Array1, Array2, Array4, ArrayView2, Axis};

use super::{mismatch, Backward, Cache, Forward, ParamId, Plan, Role};
use crate::par;

/// Samples per gradient-reduction chunk. Per-sample kernel gradients inside a
/// chunk are computed in parallel and summed in sample order, so the result is
/// independent of the worker count.
const REDUCE_CHUNK: usize = 16;

/// 2-D convolution with symmetric zero padding. Kernel layout `(out, in, k, k)`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn pointwise(&self) -> bool {
        self.k == 1 && self.s == 1 && self.p == 0
    }
}

fn im2col(x: &[f64], g: Geom) -> Array2<f64> {
    let plane = g.oh * g.ow;
    let mut cols = Array2::<f64>::zeros((g.c * g.k * g.k, plane));
    let out = cols.as_slice_mut().expect("fresh array");
    for ci in 0..g.c {
        let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut out[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.s + ky) as isize - g.p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.s + kx) as isize - g.p as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.ow + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &Array2<f64>, g: Geom) -> Vec<f64> {
    let plane = g.oh * g.ow;
    let mut x = vec![0.0; g.c * g.h * g.w];
    let src = cols.as_slice().expect("dot output is contiguous");
    for ci in 0..g.c {
        let dst = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let col = &src[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.s + ky) as isize - g.p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for ox in 0..g.ow {
                        let ix = (ox * g.s + kx) as isize - g.p as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[iy as usize * g.w + ix as usize] += col[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        plan: &mut Plan,
        layer: usize,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let weight = plan.add_param(
            layer,
            "kernel",
            vec![cout, cin, k, k],
            Role::Kernel,
            cin * k * k,
            cout * k * k,
        );
        let bias =
            bias.then(|| plan.add_param(layer, "bias", vec![cout], Role::Bias, cin * k * k, cout));
        Self {
            weight,
            bias,
            cin,
            cout,
            k,
            stride,
            pad,
        }
    }

    fn geom(&self, dim: (usize, usize, usize, usize)) -> Geom {
        let (_, c, h, w) = dim;
        assert_eq!(
            c, self.cin,
            "conv expects {} input channels, got {c}",
            self.cin
        );
        assert!(
            h + 2 * self.pad >= self.k && w + 2 * self.pad >= self.k,
            "feature map {h}x{w} smaller than kernel"
        );
        Geom {
            c,
            h,
            w,
            k: self.k,
            s: self.stride,
            p: self.pad,
            oh: (h + 2 * self.pad - self.k) / self.stride + 1,
            ow: (w + 2 * self.pad - self.k) / self.stride + 1,
        }
    }

    fn kernel_matrix<'a>(&self, values: &'a [ndarray::ArrayD<f64>]) -> ArrayView2<'a, f64> {
        values[self.weight.0]
            .view()
            .into_shape_with_order((self.cout, self.cin * self.k * self.k))
            .expect("kernel stored contiguously")
    }

    pub fn forward(&self, x: Array4<f64>, cx: &mut Forward<'_>) -> Array4<f64> {
        let x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        let g = self.geom(x.dim());
        let n = x.dim().0;
        let wmat = self.kernel_matrix(cx.values);
        let bias = self.bias.map(|b| &cx.values[b.0]);
        let sample = g.c * g.h * g.w;
        let xs = x.as_slice().expect("standard layout");
        let per: Vec<Array2<f64>> = par::map_range(n, |i| {
            let xi = &xs[i * sample..(i + 1) * sample];
            let mut y = if g.pointwise() {
                let view = ArrayView2::from_shape((g.c, g.h * g.w), xi).expect("contiguous sample");
                wmat.dot(&view)
            } else {
                wmat.dot(&im2col(xi, g))
            };
            if let Some(b) = bias {
                for (mut row, bv) in y.axis_iter_mut(Axis(0)).zip(b.iter()) {
                    row += *bv;
                }
            }
            y
        });
        let mut out = Vec::with_capacity(n * self.cout * g.oh * g.ow);
        for y in &per {
            out.extend_from_slice(y.as_slice().expect("dot output is contiguous"));
        }
        if cx.tape.is_some() {
            cx.record(Cache::Conv(x));
        }
        Array4::from_shape_vec((n, self.cout, g.oh, g.ow), out).expect("sized above")
    }

    pub fn backward(
        &self,
        grad: Array4<f64>,
        cx: &mut Backward<'_>,
        need_input: bool,
    ) -> Array4<f64> {
        let x = match cx.pop() {
            Cache::Conv(x) => x,
            other => mismatch("conv", &other),
        };
        let g = self.geom(x.dim());
        let n = x.dim().0;
        let grad = if grad.is_standard_layout() {
            grad
        } else {
            grad.as_standard_layout().into_owned()
        };
        let train_w = cx.trainable[self.weight.0];
        let train_b = self.bias.is_some_and(|b| cx.trainable[b.0]);
        let wmat = self.kernel_matrix(cx.values);
        let sample_in = g.c * g.h * g.w;
        let sample_out = self.cout * g.oh * g.ow;
        let xs = x.as_slice().expect("cached input is standard layout");
        let gs = grad.as_slice().expect("standard layout");

        let mut dw = train_w.then(|| Array2::<f64>::zeros((self.cout, g.c * g.k * g.k)));
        let mut db = train_b.then(|| Array1::<f64>::zeros(self.cout));
        let mut dx = if need_input {
            vec![0.0; n * sample_in]
        } else {
            Vec::new()
        };

        for start in (0..n).step_by(REDUCE_CHUNK) {
            let len = REDUCE_CHUNK.min(n - start);
            let parts = par::map_range(len, |j| {
                let i = start + j;
                let gi = ArrayView2::from_shape(
                    (self.cout, g.oh * g.ow),
                    &gs[i * sample_out..(i + 1) * sample_out],
                )
                .expect("contiguous grad");
                let xi = &xs[i * sample_in..(i + 1) * sample_in];
                let dwi = train_w.then(|| {
                    if g.pointwise() {
                        let view = ArrayView2::from_shape((g.c, g.h * g.w), xi)
                            .expect("contiguous sample");
                        gi.dot(&view.t())
                    } else {
                        gi.dot(&im2col(xi, g).t())
                    }
                });
                let dbi = train_b.then(|| gi.sum_axis(Axis(1)));
                let dxi = need_input.then(|| {
                    let cols = wmat.t().dot(&gi);
                    if g.pointwise() {
                        cols.as_standard_layout()
                            .into_owned()
                            .into_raw_vec_and_offset()
                            .0
                    } else {
                        col2im(&cols.as_standard_layout().into_owned(), g)
                    }
                });
                (dwi, dbi, dxi)
            });
            for (j, (dwi, dbi, dxi)) in parts.into_iter().enumerate() {
                if let (Some(acc), Some(v)) = (dw.as_mut(), dwi) {
                    *acc += &v;
                }
                if let (Some(acc), Some(v)) = (db.as_mut(), dbi) {
                    *acc += &v;
                }
                if let Some(v) = dxi {
                    let i = start + j;
                    dx[i * sample_in..(i + 1) * sample_in].copy_from_slice(&v);
                }
            }
        }
        if let Some(dw) = dw {
            let target = &mut cx.grads[self.weight.0];
            let flat = dw
                .into_shape_with_order(target.raw_dim())
                .expect("same element count");
            *target += &flat;
        }
        if let (Some(db), Some(b)) = (db, self.bias) {
            let target = &mut cx.grads[b.0];
            *target += &db.into_dyn();
        }
        if need_input {
            Array4::from_shape_vec((n, g.c, g.h, g.w), dx).expect("sized above")
        } else {
            Array4::zeros((0, 0, 0, 0))
        }
    }
}
