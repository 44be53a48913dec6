//! Named trainable parameters and their gradient buffers.
//!
//! A [`ParamSet`] owns every weight of a model in registration order. Names
//! are stable identifiers ("s1.u_own_i", "head.w", ...) used by checkpoints;
//! [`ParamId`] is the cheap in-memory handle the tape and the optimizer use.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Index of a parameter within its [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// One weight tensor plus its gradient accumulator.
///
/// The gradient always has the same shape as the value; it is zero right
/// after [`ParamSet::zero_grads`] and accumulates across backward passes
/// until the next reset.
#[derive(Debug, Clone)]
pub struct Parameter<F> {
    name: String,
    value: Tensor<F>,
    grad: Tensor<F>,
    trainable: bool,
}

impl<F: Real> Parameter<F> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<F> {
        &self.value
    }

    pub fn grad(&self) -> &Tensor<F> {
        &self.grad
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

/// The full parameter collection of one model.
#[derive(Debug, Clone)]
pub struct ParamSet<F: Real> {
    params: Vec<Parameter<F>>,
}

impl<F: Real> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Adds a parameter; the gradient buffer starts at zero. Names must be
    /// unique within the set.
    pub fn register(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<ParamId> {
        let name = name.into();
        if self.id_of(&name).is_some() {
            return Err(Error::Config(alloc::format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Parameter {
            name,
            value,
            grad,
            trainable: true,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    /// Mutable access for optimizer updates and checkpoint loading; the
    /// shape must be preserved by the caller.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].grad
    }

    pub fn trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    /// Marks a parameter as frozen (excluded from optimizer updates) or
    /// trainable again. Gradients are still computed either way.
    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = F::zero();
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor<F>) {
        let grad = &mut self.params[id.0].grad;
        debug_assert_eq!(grad.shape(), delta.shape());
        for (g, d) in grad.data_mut().iter_mut().zip(delta.data()) {
            *g += *d;
        }
    }

    pub fn scale_grads(&mut self, k: F) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g *= k;
            }
        }
    }

    /// One SGD update for a single parameter, with classical momentum:
    /// `velocity ← momentum·velocity − lr·grad`, then
    /// `value ← value + velocity`. With zero momentum this is plain
    /// gradient descent. The caller owns the velocity buffer (same shape
    /// as the parameter) and decides which parameters to step.
    pub fn sgd_step(&mut self, id: ParamId, lr: F, momentum: F, velocity: &mut Tensor<F>) {
        let p = &mut self.params[id.0];
        debug_assert_eq!(p.value.shape(), velocity.shape());
        let (value, grad) = (&mut p.value, &p.grad);
        for ((v, g), vel) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(velocity.data_mut())
        {
            *vel = momentum * *vel - lr * *g;
            *v += *vel;
        }
    }

    pub fn values_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }
}
