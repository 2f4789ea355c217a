use ndarray::{Array2, Array4, ArrayD};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_freeze, build_backbone, build_head, Backbone, BackboneSpec, FreezePolicy, HeadConfig,
    ModelError, WeightSource,
};
use crate::nn::{
    backward_chain, global_average_pool, global_average_pool_backward, Backward, Buffers, Forward,
    HeadNet, ParamStore, Plan, Section, Tape,
};

/// Smallest square input every family accepts (five halvings).
pub const MIN_INPUT_SIZE: usize = 32;

/// Everything needed to rebuild an assembly's structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblySpec {
    pub backbone: BackboneSpec,
    pub freeze: FreezePolicy,
    pub head: HeadConfig,
    /// Seed of the head initialization.
    pub head_seed: u64,
}

/// Recorded forward pass awaiting its backward.
pub struct TrainPass {
    pub logits: Array2<f64>,
    tape: Tape,
    feature_dim: (usize, usize, usize, usize),
    start: usize,
}

/// Backbone + pooling + head with parameters and a trainable mask.
#[derive(Debug, Clone)]
pub struct ModelAssembly {
    spec: AssemblySpec,
    backbone: Backbone,
    head: HeadNet,
    plan: Plan,
    store: ParamStore,
}

impl ModelAssembly {
    /// Builds the structure, loads backbone weights and applies the freeze policy.
    pub fn build(spec: &AssemblySpec) -> Result<Self, ModelError> {
        let source = WeightSource::parse(&spec.backbone.weights)?;
        let mut assembly = Self::skeleton(spec)?;
        source.apply(spec.backbone.family, &assembly.plan, &mut assembly.store)?;
        Ok(assembly)
    }

    /// Builds the structure and installs saved parameters and buffers.
    pub fn with_state(
        spec: &AssemblySpec,
        values: Vec<ArrayD<f64>>,
        buffers: Vec<ArrayD<f64>>,
    ) -> Result<Self, ModelError> {
        let mut assembly = Self::skeleton(spec)?;
        let plan = &assembly.plan;
        if values.len() != plan.params.len() || buffers.len() != plan.buffers.len() {
            return Err(ModelError::Weights(format!(
                "state has {} tensors and {} buffers, model needs {} and {}",
                values.len(),
                buffers.len(),
                plan.params.len(),
                plan.buffers.len()
            )));
        }
        for (v, p) in values.iter().zip(&plan.params) {
            if v.shape() != p.shape.as_slice() {
                return Err(ModelError::Weights(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    p.name,
                    v.shape(),
                    p.shape
                )));
            }
        }
        for (v, b) in buffers.iter().zip(&plan.buffers) {
            if v.shape() != b.shape.as_slice() {
                return Err(ModelError::Weights(format!(
                    "buffer `{}` has shape {:?}, expected {:?}",
                    b.name,
                    v.shape(),
                    b.shape
                )));
            }
        }
        let mask = assembly.store.trainable().to_vec();
        assembly.store = ParamStore::from_parts(values, buffers);
        assembly.store.set_trainable(&mask);
        Ok(assembly)
    }

    fn skeleton(spec: &AssemblySpec) -> Result<Self, ModelError> {
        let mut plan = Plan::default();
        let backbone = build_backbone(spec.backbone.family, spec.backbone.variant, &mut plan);
        let head = build_head(&spec.head, backbone.feature_dim, &mut plan)?;
        let mask = apply_freeze(&plan, spec.freeze)?;
        let mut store = ParamStore::init(&plan, spec.head_seed);
        store.set_trainable(&mask);
        Ok(Self {
            spec: spec.clone(),
            backbone,
            head,
            plan,
            store,
        })
    }

    pub fn spec(&self) -> &AssemblySpec {
        &self.spec
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.feature_dim
    }

    pub fn output_classes(&self) -> usize {
        self.spec.head.output_classes
    }

    pub fn trainable_mask(&self) -> &[bool] {
        self.store.trainable()
    }

    /// Learnable scalars with mask = true.
    pub fn trainable_count(&self) -> usize {
        self.plan
            .params
            .iter()
            .zip(self.store.trainable())
            .filter(|(_, &t)| t)
            .map(|(p, _)| p.len())
            .sum()
    }

    pub fn head_parameter_count(&self) -> usize {
        self.plan.section_parameter_count(Section::Head)
    }

    fn to_nchw(&self, batch: &Array4<f64>) -> Result<Array4<f64>, ModelError> {
        let (_, h, w, c) = batch.dim();
        if c != 3 || h < MIN_INPUT_SIZE || w < MIN_INPUT_SIZE {
            return Err(ModelError::Shape {
                expected: format!("(B, H, W, 3) with H, W >= {MIN_INPUT_SIZE}"),
                found: batch.shape().to_vec(),
            });
        }
        Ok(batch
            .view()
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .into_owned())
    }

    /// Eval-mode logits for a `(B, H, W, 3)` batch. Pure function of
    /// parameters and input.
    pub fn logits(&self, batch: &Array4<f64>) -> Result<Array2<f64>, ModelError> {
        let x = self.to_nchw(batch)?;
        let mut cx = Forward {
            values: self.store.values(),
            trainable: self.store.trainable(),
            buffers: Buffers::Read(self.store.buffers()),
            train: false,
            tape: None,
            rng: None,
        };
        let feats = self
            .backbone
            .nodes
            .iter()
            .fold(x, |acc, n| n.forward(acc, &mut cx));
        Ok(self.head.forward(global_average_pool(&feats), &mut cx))
    }

    /// Train-mode forward recording what the backward pass needs. Leading
    /// backbone nodes without trainable parameters run unrecorded.
    pub fn forward_train(
        &mut self,
        batch: &Array4<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrainPass, ModelError> {
        let x = self.to_nchw(batch)?;
        let nodes = &self.backbone.nodes;
        let start = nodes
            .iter()
            .position(|n| n.has_trainable(self.store.trainable()))
            .unwrap_or(nodes.len());
        let mut tape = Tape::new();
        let (values, trainable, buffers) = self.store.forward_parts();
        let mut cx = Forward {
            values,
            trainable,
            buffers: Buffers::Write(buffers),
            train: true,
            tape: None,
            rng: Some(rng),
        };
        let mut feats = nodes[..start]
            .iter()
            .fold(x, |acc, n| n.forward(acc, &mut cx));
        cx.tape = Some(&mut tape);
        feats = nodes[start..]
            .iter()
            .fold(feats, |acc, n| n.forward(acc, &mut cx));
        let feature_dim = feats.dim();
        let logits = self.head.forward(global_average_pool(&feats), &mut cx);
        Ok(TrainPass {
            logits,
            tape,
            feature_dim,
            start,
        })
    }

    /// Accumulates parameter gradients of `sum(dlogits * logits)` into the store.
    pub fn backward(&mut self, pass: TrainPass, dlogits: &Array2<f64>) {
        let TrainPass {
            mut tape,
            feature_dim,
            start,
            ..
        } = pass;
        let (values, grads, trainable) = self.store.backward_parts();
        let mut cx = Backward {
            values,
            grads,
            trainable,
            tape: &mut tape,
        };
        let need_features = start < self.backbone.nodes.len();
        let g = self.head.backward(dlogits.clone(), &mut cx, need_features);
        if need_features {
            let g = global_average_pool_backward(&g, feature_dim);
            backward_chain(&self.backbone.nodes[start..], g, &mut cx);
        }
        debug_assert!(tape.is_empty(), "tape not fully consumed");
    }
}

/// The parameter plan of `spec` without allocating any tensors.
pub fn build_plan(spec: &AssemblySpec) -> Result<Plan, ModelError> {
    let mut plan = Plan::default();
    let backbone = build_backbone(spec.backbone.family, spec.backbone.variant, &mut plan);
    build_head(&spec.head, backbone.feature_dim, &mut plan)?;
    Ok(plan)
}
