//! Minimal CPU layer engine: parameter plans and stores, a tree of layer nodes
//! with explicit backward passes, and a tape that carries forward activations to
//! the backward pass.
//!
//! Feature maps are `(N, C, H, W)` `f64` arrays. Nodes are immutable; everything
//! a backward pass needs is pushed onto the [`Tape`] during a recording forward
//! pass and popped in reverse, so eval-mode forwards can run through `&self`.

mod conv;
mod dense;
mod norm;
mod pool;
mod store;

pub use conv::Conv2d;
pub use dense::{Dense, HeadNet};
pub use norm::BatchNorm;
pub use pool::{AvgPool, MaxPool, ZeroPad};
pub use store::{
    BufferId, BufferSpec, LayerInfo, LayerKind, ParamId, ParamSpec, ParamStore, Plan, Role, Section,
};

use ndarray::{concatenate, s, Array2, Array4, ArrayD, Axis};
use rand_chacha::ChaCha8Rng;

/// Saved activations for one node, in forward order.
#[derive(Debug, Clone)]
pub enum Cache {
    Conv(Array4<f64>),
    Norm {
        xhat: Array4<f64>,
        invstd: Vec<f64>,
        batch_stats: bool,
    },
    Relu(Array4<f64>),
    MaxPool {
        argmax: Vec<usize>,
        input_dim: (usize, usize, usize, usize),
    },
    AvgPool {
        input_dim: (usize, usize, usize, usize),
    },
    Pad,
    Residual(Array4<f64>),
    Concat(usize),
    Dense(Array2<f64>),
    Relu2(Array2<f64>),
    Dropout(Option<Array2<f64>>),
}

pub type Tape = Vec<Cache>;

/// Running statistics are only written during training forwards.
pub enum Buffers<'a> {
    Read(&'a [ArrayD<f64>]),
    Write(&'a mut [ArrayD<f64>]),
}

impl Buffers<'_> {
    pub fn get(&self, id: BufferId) -> &ArrayD<f64> {
        match self {
            Buffers::Read(b) => &b[id.0],
            Buffers::Write(b) => &b[id.0],
        }
    }
}

pub struct Forward<'a> {
    pub values: &'a [ArrayD<f64>],
    pub trainable: &'a [bool],
    pub buffers: Buffers<'a>,
    pub train: bool,
    pub tape: Option<&'a mut Tape>,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl Forward<'_> {
    pub(crate) fn record(&mut self, c: Cache) {
        if let Some(t) = self.tape.as_deref_mut() {
            t.push(c);
        }
    }
}

pub struct Backward<'a> {
    pub values: &'a [ArrayD<f64>],
    pub grads: &'a mut [ArrayD<f64>],
    pub trainable: &'a [bool],
    pub tape: &'a mut Tape,
}

impl Backward<'_> {
    pub(crate) fn pop(&mut self) -> Cache {
        self.tape
            .pop()
            .expect("backward pass without matching recorded forward")
    }
}

/// A residual unit: `relu(main(x) + shortcut(x))`, shortcut defaulting to identity.
#[derive(Debug, Clone)]
pub struct Residual {
    pub main: Box<Node>,
    pub shortcut: Option<Box<Node>>,
}

#[derive(Debug, Clone)]
pub enum Node {
    Conv(Conv2d),
    Norm(BatchNorm),
    Relu,
    MaxPool(MaxPool),
    AvgPool(AvgPool),
    Pad(ZeroPad),
    Seq(Vec<Node>),
    Residual(Residual),
    /// Each layer sees the concatenation of the block input and all earlier
    /// layer outputs; the block output is the full concatenation.
    DenseBlock(Vec<Node>),
}

impl Node {
    pub fn forward(&self, x: Array4<f64>, cx: &mut Forward<'_>) -> Array4<f64> {
        match self {
            Node::Conv(c) => c.forward(x, cx),
            Node::Norm(n) => n.forward(x, cx),
            Node::Relu => {
                let y = x.mapv_into(|v| v.max(0.0));
                if cx.tape.is_some() {
                    cx.record(Cache::Relu(y.clone()));
                }
                y
            }
            Node::MaxPool(p) => p.forward(x, cx),
            Node::AvgPool(p) => p.forward(x, cx),
            Node::Pad(p) => p.forward(x, cx),
            Node::Seq(nodes) => nodes.iter().fold(x, |acc, n| n.forward(acc, cx)),
            Node::Residual(r) => {
                let main = r.main.forward(x.clone(), cx);
                let short = match &r.shortcut {
                    Some(s) => s.forward(x, cx),
                    None => x,
                };
                let y = (main + short).mapv_into(|v| v.max(0.0));
                if cx.tape.is_some() {
                    cx.record(Cache::Residual(y.clone()));
                }
                y
            }
            Node::DenseBlock(layers) => {
                let mut feats = x;
                for layer in layers {
                    let split = feats.dim().1;
                    let new = layer.forward(feats.clone(), cx);
                    feats = concatenate![Axis(1), feats, new];
                    cx.record(Cache::Concat(split));
                }
                feats
            }
        }
    }

    /// Backpropagates `g`. `need_input` lets the first node of a chain skip the
    /// input gradient; the returned array is then empty.
    pub fn backward(&self, g: Array4<f64>, cx: &mut Backward<'_>, need_input: bool) -> Array4<f64> {
        match self {
            Node::Conv(c) => c.backward(g, cx, need_input),
            Node::Norm(n) => n.backward(g, cx),
            Node::Relu => match cx.pop() {
                Cache::Relu(y) => relu_grad(g, &y),
                other => mismatch("relu", &other),
            },
            Node::MaxPool(p) => p.backward(g, cx),
            Node::AvgPool(p) => p.backward(g, cx),
            Node::Pad(p) => p.backward(g, cx),
            Node::Seq(nodes) => {
                let mut g = g;
                for (i, n) in nodes.iter().enumerate().rev() {
                    g = n.backward(g, cx, need_input || i > 0);
                }
                g
            }
            Node::Residual(r) => {
                let g = match cx.pop() {
                    Cache::Residual(y) => relu_grad(g, &y),
                    other => mismatch("residual", &other),
                };
                let g_short = match &r.shortcut {
                    Some(s) => s.backward(g.clone(), cx, true),
                    None => g.clone(),
                };
                let g_main = r.main.backward(g, cx, true);
                g_main + g_short
            }
            Node::DenseBlock(layers) => {
                let mut g = g;
                for layer in layers.iter().rev() {
                    let split = match cx.pop() {
                        Cache::Concat(s) => s,
                        other => mismatch("dense block", &other),
                    };
                    let g_new = g.slice(s![.., split.., .., ..]).to_owned();
                    let mut g_prev = g.slice(s![.., ..split, .., ..]).to_owned();
                    g_prev += &layer.backward(g_new, cx, true);
                    g = g_prev;
                }
                g
            }
        }
    }

    /// Whether any parameter under this node is trainable.
    pub fn has_trainable(&self, trainable: &[bool]) -> bool {
        let mut any = false;
        self.visit_params(&mut |p| any |= trainable[p.0]);
        any
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(ParamId)) {
        match self {
            Node::Conv(c) => {
                f(c.weight);
                if let Some(b) = c.bias {
                    f(b);
                }
            }
            Node::Norm(n) => {
                f(n.gamma);
                f(n.beta);
            }
            Node::Relu | Node::MaxPool(_) | Node::AvgPool(_) | Node::Pad(_) => {}
            Node::Seq(nodes) | Node::DenseBlock(nodes) => {
                nodes.iter().for_each(|n| n.visit_params(f))
            }
            Node::Residual(r) => {
                r.main.visit_params(f);
                if let Some(s) = &r.shortcut {
                    s.visit_params(f);
                }
            }
        }
    }
}

/// Backward through a top-level chain, stopping once nothing earlier in the
/// chain has trainable parameters.
pub fn backward_chain(nodes: &[Node], g: Array4<f64>, cx: &mut Backward<'_>) {
    let mut earlier = vec![false; nodes.len()];
    let mut seen = false;
    for (i, n) in nodes.iter().enumerate() {
        earlier[i] = seen;
        seen |= n.has_trainable(cx.trainable);
    }
    let mut g = g;
    for (i, n) in nodes.iter().enumerate().rev() {
        if !earlier[i] && !n.has_trainable(cx.trainable) {
            break;
        }
        g = n.backward(g, cx, earlier[i]);
    }
}

pub(crate) fn relu_grad(mut g: Array4<f64>, y: &Array4<f64>) -> Array4<f64> {
    g.zip_mut_with(y, |gv, &yv| {
        if yv <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

#[cold]
pub(crate) fn mismatch(node: &str, got: &Cache) -> ! {
    panic!("tape out of sync: {node} node found {got:?}")
}

/// Channel means over the spatial axes: `(N, C, H, W) -> (N, C)`.
pub fn global_average_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let flat = x.as_standard_layout();
    let flat = flat
        .view()
        .into_shape_with_order((n, c, h * w))
        .expect("standard layout");
    flat.sum_axis(Axis(2)) / (h * w) as f64
}

pub fn global_average_pool_backward(
    g: &Array2<f64>,
    dim: (usize, usize, usize, usize),
) -> Array4<f64> {
    let (n, c, h, w) = dim;
    let scale = 1.0 / (h * w) as f64;
    let mut out = Array4::<f64>::zeros(dim);
    for i in 0..n {
        for ch in 0..c {
            out.slice_mut(s![i, ch, .., ..]).fill(g[[i, ch]] * scale);
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn input(dim: (usize, usize, usize, usize)) -> Array4<f64> {
        Array4::from_shape_fn(dim, |(a, b, c, d)| {
            ((a * 13 + b * 7 + c * 5 + d * 3) % 17) as f64 / 8.0 - 1.0
        })
    }

    #[test]
    fn residual_block_gradients() {
        let mut plan = Plan::default();
        let l = plan.add_layer("a", LayerKind::Conv, Section::Backbone, 0, 0);
        let c1 = Conv2d::register(&mut plan, l, 3, 4, 3, 1, 1, true);
        let l = plan.add_layer("b", LayerKind::Conv, Section::Backbone, 0, 1);
        let c2 = Conv2d::register(&mut plan, l, 4, 3, 1, 1, 0, true);
        let node = Node::Residual(Residual {
            main: Box::new(Node::Seq(vec![Node::Conv(c1), Node::Relu, Node::Conv(c2)])),
            shortcut: None,
        });
        let mut store = ParamStore::init(&plan, 3);
        let x = input((2, 3, 5, 5));
        check_node(&node, &mut store, &x, (2, 3, 5, 5), 1e-5);
    }

    #[test]
    fn dense_block_gradients() {
        let mut plan = Plan::default();
        let mut layers = Vec::new();
        let mut cin = 2;
        for i in 0..2 {
            let l = plan.add_layer(
                &format!("bn{i}"),
                LayerKind::BatchNorm,
                Section::Backbone,
                0,
                i,
            );
            let bn = BatchNorm::register(&mut plan, l, cin, 1e-3);
            let l = plan.add_layer(&format!("c{i}"), LayerKind::Conv, Section::Backbone, 0, i);
            let c = Conv2d::register(&mut plan, l, cin, 2, 3, 1, 1, false);
            layers.push(Node::Seq(vec![Node::Norm(bn), Node::Relu, Node::Conv(c)]));
            cin += 2;
        }
        let node = Node::DenseBlock(layers);
        let mut store = ParamStore::init(&plan, 5);
        // random values keep normalized activations away from the ReLU kink
        let mut rng = crate::seed::rng(8, &[]);
        let x = Array4::from_shape_simple_fn((3, 2, 4, 4), || {
            rand::Rng::random_range(&mut rng, -1.0..1.0)
        });
        check_node(&node, &mut store, &x, (3, 6, 4, 4), 1e-4);
    }

    #[test]
    fn gap_round_trip_shapes() {
        let x = input((2, 3, 4, 5));
        let p = global_average_pool(&x);
        assert_eq!(p.dim(), (2, 3));
        assert!((p[[1, 2]] - x.slice(s![1, 2, .., ..]).mean().unwrap()).abs() < 1e-12);
        let g = global_average_pool_backward(&Array2::ones((2, 3)), (2, 3, 4, 5));
        assert!((g.sum() - 6.0).abs() < 1e-12);
    }
}
