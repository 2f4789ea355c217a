use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BufferId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    BatchNorm,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Section {
    Backbone,
    Head,
}

/// A layer that owns parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub section: Section,
    /// Architectural stage (0 = stem); heads use 0.
    pub stage: usize,
    /// Index of the conv/dense unit this layer belongs to within its section.
    /// Normalization layers share the unit of the convolution they serve.
    pub unit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Kernel,
    Bias,
    Gamma,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub layer: usize,
    pub role: Role,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub layer: usize,
    pub init: f64,
}

/// Shapes and names of everything a model owns; cheap to build even for the
/// full-size architectures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub layers: Vec<LayerInfo>,
    pub params: Vec<ParamSpec>,
    pub buffers: Vec<BufferSpec>,
}

impl Plan {
    pub fn add_layer(
        &mut self,
        name: &str,
        kind: LayerKind,
        section: Section,
        stage: usize,
        unit: usize,
    ) -> usize {
        self.layers.push(LayerInfo {
            name: name.to_string(),
            kind,
            section,
            stage,
            unit,
        });
        self.layers.len() - 1
    }

    pub fn add_param(
        &mut self,
        layer: usize,
        suffix: &str,
        shape: Vec<usize>,
        role: Role,
        fan_in: usize,
        fan_out: usize,
    ) -> ParamId {
        let name = format!("{}/{suffix}", self.layers[layer].name);
        self.params.push(ParamSpec {
            name,
            shape,
            layer,
            role,
            fan_in,
            fan_out,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(
        &mut self,
        layer: usize,
        suffix: &str,
        shape: Vec<usize>,
        init: f64,
    ) -> BufferId {
        let name = format!("{}/{suffix}", self.layers[layer].name);
        self.buffers.push(BufferSpec {
            name,
            shape,
            layer,
            init,
        });
        BufferId(self.buffers.len() - 1)
    }

    /// Learnable scalars (kernels, biases, norm scales and offsets).
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(ParamSpec::len).sum()
    }

    /// Running-statistics scalars.
    pub fn buffer_count(&self) -> usize {
        self.buffers
            .iter()
            .map(|b| b.shape.iter().product::<usize>())
            .sum()
    }

    pub fn total_count(&self) -> usize {
        self.parameter_count() + self.buffer_count()
    }

    pub fn section_parameter_count(&self, section: Section) -> usize {
        self.params
            .iter()
            .filter(|p| self.layers[p.layer].section == section)
            .map(ParamSpec::len)
            .sum()
    }

    pub fn section_total_count(&self, section: Section) -> usize {
        self.section_parameter_count(section)
            + self
                .buffers
                .iter()
                .filter(|b| self.layers[b.layer].section == section)
                .map(|b| b.shape.iter().product::<usize>())
                .sum::<usize>()
    }

    /// Number of conv/dense units in a section.
    pub fn unit_count(&self, section: Section) -> usize {
        self.layers
            .iter()
            .filter(|l| {
                l.section == section && matches!(l.kind, LayerKind::Conv | LayerKind::Dense)
            })
            .count()
    }

    pub fn stage_count(&self, section: Section) -> usize {
        self.layers
            .iter()
            .filter(|l| l.section == section)
            .map(|l| l.stage + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn layers_of_kind(&self, kind: LayerKind) -> impl Iterator<Item = &LayerInfo> {
        self.layers.iter().filter(move |l| l.kind == kind)
    }
}

/// Materialized parameter values, gradients, trainability flags and buffers.
#[derive(Debug, Clone)]
pub struct ParamStore {
    values: Vec<ArrayD<f64>>,
    grads: Vec<ArrayD<f64>>,
    trainable: Vec<bool>,
    buffers: Vec<ArrayD<f64>>,
}

impl ParamStore {
    /// Seeded initialization: He-normal conv kernels, Glorot-uniform dense
    /// kernels, zero biases and offsets, unit scales; running means 0 and
    /// variances 1. Each tensor draws from its own stream keyed by its index.
    pub fn init(plan: &Plan, seed_value: u64) -> Self {
        let values: Vec<ArrayD<f64>> = plan
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = seed::rng(seed_value, &[i as u64]);
                let shape = IxDyn(&p.shape);
                match (p.role, plan.layers[p.layer].kind) {
                    (Role::Kernel, LayerKind::Dense) => {
                        let limit = (6.0 / (p.fan_in + p.fan_out) as f64).sqrt();
                        ArrayD::from_shape_simple_fn(shape, || rng.random_range(-limit..limit))
                    }
                    (Role::Kernel, _) => {
                        let normal =
                            Normal::new(0.0, (2.0 / p.fan_in as f64).sqrt()).expect("positive std");
                        ArrayD::from_shape_simple_fn(shape, || normal.sample(&mut rng))
                    }
                    (Role::Gamma, _) => ArrayD::ones(shape),
                    _ => ArrayD::zeros(shape),
                }
            })
            .collect();
        let buffers = plan
            .buffers
            .iter()
            .map(|b| ArrayD::from_elem(IxDyn(&b.shape), b.init))
            .collect();
        Self::from_parts(values, buffers)
    }

    pub fn from_parts(values: Vec<ArrayD<f64>>, buffers: Vec<ArrayD<f64>>) -> Self {
        let grads = values.iter().map(|v| ArrayD::zeros(v.raw_dim())).collect();
        let trainable = vec![true; values.len()];
        Self {
            values,
            grads,
            trainable,
            buffers,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[ArrayD<f64>] {
        &self.values
    }

    pub fn grads(&self) -> &[ArrayD<f64>] {
        &self.grads
    }

    pub fn buffers(&self) -> &[ArrayD<f64>] {
        &self.buffers
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut ArrayD<f64> {
        &mut self.buffers[id.0]
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    pub fn set_trainable(&mut self, mask: &[bool]) {
        assert_eq!(
            mask.len(),
            self.trainable.len(),
            "mask must cover every parameter"
        );
        self.trainable.copy_from_slice(mask);
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn forward_parts(&mut self) -> (&[ArrayD<f64>], &[bool], &mut [ArrayD<f64>]) {
        (&self.values, &self.trainable, &mut self.buffers)
    }

    pub fn backward_parts(&mut self) -> (&[ArrayD<f64>], &mut [ArrayD<f64>], &[bool]) {
        (&self.values, &mut self.grads, &self.trainable)
    }

    /// Values, gradients and mask for an optimizer step.
    pub fn update_parts(&mut self) -> (&mut [ArrayD<f64>], &[ArrayD<f64>], &[bool]) {
        (&mut self.values, &self.grads, &self.trainable)
    }

    /// Copies values and buffers (not gradients) from `other`.
    pub fn copy_state_from(&mut self, other: &ParamStore) {
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            dst.assign(src);
        }
        for (dst, src) in self.buffers.iter_mut().zip(&other.buffers) {
            dst.assign(src);
        }
    }

    /// Values and buffers only.
    pub fn snapshot(&self) -> (Vec<ArrayD<f64>>, Vec<ArrayD<f64>>) {
        (self.values.clone(), self.buffers.clone())
    }

    pub fn restore(&mut self, snapshot: &(Vec<ArrayD<f64>>, Vec<ArrayD<f64>>)) {
        for (dst, src) in self.values.iter_mut().zip(&snapshot.0) {
            dst.assign(src);
        }
        for (dst, src) in self.buffers.iter_mut().zip(&snapshot.1) {
            dst.assign(src);
        }
    }
}
