use std::collections::HashMap;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable matrices with Adam moment accumulators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    lookup: HashMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter `{name}`"
            )));
        }
        let id = ParamId(self.values.len());
        self.first_moment
            .push(Matrix::zeros(value.rows(), value.cols()));
        self.second_moment
            .push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn first_moment(&self, id: ParamId) -> &Matrix {
        &self.first_moment[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Matrix {
        &self.second_moment[id.0]
    }

    /// Adam steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub(crate) fn restore_state(
        &mut self,
        first: Vec<Matrix>,
        second: Vec<Matrix>,
        step: u64,
    ) -> Result<()> {
        for (k, (a, b)) in first.iter().zip(&second).enumerate() {
            let shape = self.values[k].shape();
            if a.shape() != shape || b.shape() != shape {
                return Err(Error::ShapeMismatch {
                    op: "restore_state",
                    lhs: shape,
                    rhs: a.shape(),
                });
            }
        }
        if first.len() != self.len() || second.len() != self.len() {
            return Err(Error::Malformed(
                "moment count differs from parameter count".into(),
            ));
        }
        self.first_moment = first;
        self.second_moment = second;
        self.step = step;
        Ok(())
    }

    /// One Adam update with learning rate `lr`.
    ///
    /// `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`, then
    /// `θ ← θ − lr·m̂/(√v̂ + ε)` with bias-corrected moments.
    pub fn adam_step(&mut self, grads: &GradBuffer, lr: f64) -> Result<()> {
        if grads.grads.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient count {} differs from parameter count {}",
                grads.grads.len(),
                self.values.len()
            )));
        }
        for (value, g) in self.values.iter().zip(&grads.grads) {
            if value.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: value.shape(),
                    rhs: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - ADAM_BETA1.powi(t);
        let correction2 = 1.0 - ADAM_BETA2.powi(t);
        for k in 0..self.values.len() {
            let theta = self.values[k].as_mut_slice();
            let m = self.first_moment[k].as_mut_slice();
            let v = self.second_moment[k].as_mut_slice();
            for (((p, mk), vk), &gk) in theta
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(grads.grads[k].as_slice())
            {
                *mk = ADAM_BETA1 * *mk + (1.0 - ADAM_BETA1) * gk;
                *vk = ADAM_BETA2 * *vk + (1.0 - ADAM_BETA2) * gk * gk;
                let m_hat = *mk / correction1;
                let v_hat = *vk / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
        Ok(())
    }
}

/// Gradient accumulator shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Matrix>,
}

impl GradBuffer {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store
                .values
                .iter()
                .map(|v| Matrix::zeros(v.rows(), v.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn add_scaled(&mut self, id: ParamId, g: &Matrix, scale: f64) {
        self.grads[id.0].add_scaled(g, scale);
    }

    /// `self += scale * other`.
    pub fn merge(&mut self, other: &GradBuffer, scale: f64) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_scaled(b, scale);
        }
    }

    pub fn clear(&mut self) {
        for g in &mut self.grads {
            g.as_mut_slice().fill(0.0);
        }
    }
}
