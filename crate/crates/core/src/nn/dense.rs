use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::{mismatch, Backward, Cache, Forward, LayerKind, ParamId, Plan, Role, Section};

/// Fully connected layer. Kernel layout `(in, out)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn register(plan: &mut Plan, layer: usize, input: usize, output: usize) -> Self {
        let weight = plan.add_param(
            layer,
            "kernel",
            vec![input, output],
            Role::Kernel,
            input,
            output,
        );
        let bias = plan.add_param(layer, "bias", vec![output], Role::Bias, input, output);
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    fn kernel<'a>(&self, values: &'a [ndarray::ArrayD<f64>]) -> ArrayView2<'a, f64> {
        values[self.weight.0]
            .view()
            .into_shape_with_order((self.input, self.output))
            .expect("kernel stored contiguously")
    }

    pub fn forward(&self, x: Array2<f64>, cx: &mut Forward<'_>) -> Array2<f64> {
        assert_eq!(
            x.ncols(),
            self.input,
            "dense expects {} inputs, got {}",
            self.input,
            x.ncols()
        );
        let mut y = x.dot(&self.kernel(cx.values));
        let b = &cx.values[self.bias.0];
        for mut row in y.axis_iter_mut(Axis(0)) {
            row.zip_mut_with(b, |v, bv| *v += bv);
        }
        if cx.tape.is_some() {
            cx.record(Cache::Dense(x));
        }
        y
    }

    pub fn backward(&self, g: Array2<f64>, cx: &mut Backward<'_>, need_input: bool) -> Array2<f64> {
        let x = match cx.pop() {
            Cache::Dense(x) => x,
            other => mismatch("dense", &other),
        };
        if cx.trainable[self.weight.0] {
            let dw = x.t().dot(&g).into_dyn();
            cx.grads[self.weight.0] += &dw;
        }
        if cx.trainable[self.bias.0] {
            let db = g.sum_axis(Axis(0)).into_dyn();
            cx.grads[self.bias.0] += &db;
        }
        if need_input {
            g.dot(&self.kernel(cx.values).t())
        } else {
            Array2::zeros((0, 0))
        }
    }
}

/// One hidden block of the classification head: dense, ReLU, dropout.
#[derive(Debug, Clone)]
pub struct HeadBlock {
    pub dense: Dense,
    pub dropout: f64,
}

/// Dense classifier applied to pooled backbone features.
#[derive(Debug, Clone)]
pub struct HeadNet {
    pub blocks: Vec<HeadBlock>,
    pub output: Dense,
}

impl HeadNet {
    /// Registers hidden blocks `(units, dropout)` followed by the output layer.
    pub fn register(
        plan: &mut Plan,
        input: usize,
        blocks: &[(usize, f64)],
        classes: usize,
    ) -> Self {
        let mut width = input;
        let mut built = Vec::with_capacity(blocks.len());
        for (i, &(units, dropout)) in blocks.iter().enumerate() {
            let l = plan.add_layer(
                &format!("head_dense_{i}"),
                LayerKind::Dense,
                Section::Head,
                0,
                i,
            );
            built.push(HeadBlock {
                dense: Dense::register(plan, l, width, units),
                dropout,
            });
            width = units;
        }
        let l = plan.add_layer(
            "predictions",
            LayerKind::Dense,
            Section::Head,
            0,
            blocks.len(),
        );
        let output = Dense::register(plan, l, width, classes);
        Self {
            blocks: built,
            output,
        }
    }

    pub fn forward(&self, x: Array2<f64>, cx: &mut Forward<'_>) -> Array2<f64> {
        let mut h = x;
        for block in &self.blocks {
            h = block.dense.forward(h, cx).mapv_into(|v| v.max(0.0));
            if cx.tape.is_some() {
                cx.record(Cache::Relu2(h.clone()));
            }
            let mask = if cx.train && block.dropout > 0.0 {
                let rng = cx
                    .rng
                    .as_deref_mut()
                    .expect("training forward with dropout needs an rng");
                let keep = 1.0 - block.dropout;
                let mask = Array2::from_shape_simple_fn(h.raw_dim(), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                h *= &mask;
                Some(mask)
            } else {
                None
            };
            cx.record(Cache::Dropout(mask));
        }
        self.output.forward(h, cx)
    }

    pub fn backward(&self, g: Array2<f64>, cx: &mut Backward<'_>, need_input: bool) -> Array2<f64> {
        let mut g = self
            .output
            .backward(g, cx, need_input || !self.blocks.is_empty());
        for (i, block) in self.blocks.iter().enumerate().rev() {
            if let Some(mask) = match cx.pop() {
                Cache::Dropout(m) => m,
                other => mismatch("dropout", &other),
            } {
                g *= &mask;
            }
            match cx.pop() {
                Cache::Relu2(y) => g.zip_mut_with(&y, |gv, &yv| {
                    if yv <= 0.0 {
                        *gv = 0.0;
                    }
                }),
                other => mismatch("head relu", &other),
            }
            g = block.dense.backward(g, cx, need_input || i > 0);
        }
        g
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(ParamId)) {
        for b in &self.blocks {
            f(b.dense.weight);
            f(b.dense.bias);
        }
        f(self.output.weight);
        f(self.output.bias);
    }
}
