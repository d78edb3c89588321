//! Named parameter tensors with gradients and per-parameter Adam state.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// Handle to a parameter inside one [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct Param {
    name: String,
    value: Tensor,
    grad: Tensor,
    adam: AdamState,
    fan_in: usize,
}

/// Ordered collection of named parameters.
///
/// `version` changes whenever parameter values change, which lets forward
/// caches detect that they no longer describe the current parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
    version: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a zero-initialized parameter.
    pub fn add(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::domain(format!("duplicate parameter name {name}")));
        }
        if shape.contains(&0) || fan_in == 0 {
            return Err(Error::shape(format!(
                "parameter {name} has empty shape {shape:?}"
            )));
        }
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
            adam: AdamState {
                m: Tensor::zeros(shape),
                v: Tensor::zeros(shape),
                step: 0,
            },
            fan_in,
        });
        self.index.insert(name.to_string(), id);
        self.version += 1;
        Ok(ParamId(id))
    }

    /// Uniform in `[-1/√fan_in, 1/√fan_in]`, in registration order.
    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        for p in &mut self.params {
            let bound = 1.0 / (p.fan_in as f64).sqrt();
            for v in p.value.data_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        self.version += 1;
    }

    pub fn fill(&mut self, value: f64) {
        for p in &mut self.params {
            p.value.fill(value);
        }
        self.version += 1;
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    /// Mutable access to a value; bumps the version.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        self.version += 1;
        &mut self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter {} expects shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        self.version += 1;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn adam_state(&self, id: ParamId) -> &AdamState {
        &self.params[id.0].adam
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.grad.clone()).collect()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale gradients so their global norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in &mut self.params {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
    }

    /// `(name, value)` pairs in registration order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// One bias-corrected Adam update over every parameter, using the
    /// accumulated gradients. Gradients are left untouched.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for p in &self.params {
            if !p.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        for p in &mut self.params {
            let adam = &mut p.adam;
            adam.step += 1;
            let t = adam.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            let values = p.value.data_mut();
            let grads = p.grad.data();
            let m = adam.m.data_mut();
            let v = adam.v.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.version += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(value: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("theta", &[1], 1).unwrap();
        store.value_mut(id).data_mut()[0] = value;
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let (mut store, id) = scalar_store(0.7);
        store.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(store.value(id).data()[0], 0.7);
        assert_eq!(store.adam_state(id).step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig::with_lr(1e-3);
        for g in [0.3, -2.0, 50.0] {
            let (mut store, id) = scalar_store(1.0);
            store.grad_mut(id).data_mut()[0] = g;
            store.adam_step(&cfg).unwrap();
            // m̂ = g, v̂ = g², update = -lr g / (|g| + eps)
            let expected = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((store.value(id).data()[0] - expected).abs() < 1e-15);
            assert!(((store.value(id).data()[0] - 1.0) + cfg.lr * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn opposite_gradients_give_mirrored_updates() {
        let cfg = AdamConfig::default();
        let (mut a, ia) = scalar_store(0.0);
        let (mut b, ib) = scalar_store(0.0);
        for _ in 0..3 {
            a.grad_mut(ia).data_mut()[0] = 0.4;
            b.grad_mut(ib).data_mut()[0] = -0.4;
            a.adam_step(&cfg).unwrap();
            b.adam_step(&cfg).unwrap();
        }
        assert_eq!(a.value(ia).data()[0], -b.value(ib).data()[0]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let (mut store, id) = scalar_store(1.0);
        store.grad_mut(id).data_mut()[0] = f64::NAN;
        assert!(matches!(
            store.adam_step(&AdamConfig::default()),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(store.value(id).data()[0], 1.0);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let (mut store, id) = scalar_store(3.0);
        let cfg = AdamConfig::with_lr(0.05);
        for _ in 0..2000 {
            let x = store.value(id).data()[0];
            store.zero_grad();
            store.grad_mut(id).data_mut()[0] = 2.0 * (x - 1.0);
            store.adam_step(&cfg).unwrap();
        }
        assert!((store.value(id).data()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add("w", &[2, 2], 2).unwrap();
        assert!(store.add("w", &[2], 2).is_err());
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut store = ParamStore::new();
        let id = store.add("w", &[2], 2).unwrap();
        store.grad_mut(id).data_mut().copy_from_slice(&[3.0, 4.0]);
        store.clip_grad_norm(1.0);
        assert!((store.grad_norm() - 1.0).abs() < 1e-12);
    }
}
