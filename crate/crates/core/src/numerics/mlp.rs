//! Stacks of fully connected layers.

use serde::{Deserialize, Serialize};

use super::ops::{matvec, matvec_t_acc, outer_acc};
use super::{ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths `sizes[0] -> sizes[1] -> ...` with one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    /// ReLU on every hidden layer, linear output.
    pub fn relu_stack(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(Activation::Identity);
        Self { sizes, activations }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    version: u64,
}

impl Mlp {
    pub fn register(store: &mut ParamStore, prefix: &str, spec: MlpSpec) -> Result<Self> {
        if spec.sizes.len() < 2
            || spec.activations.len() + 1 != spec.sizes.len()
            || spec.sizes.contains(&0)
        {
            return Err(Error::shape(format!("invalid MLP spec {spec:?}")));
        }
        let mut layers = Vec::new();
        for (l, w) in spec.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wid = store.add(&format!("{prefix}.l{l}.w"), &[fan_out, fan_in], fan_in)?;
            let bid = store.add(&format!("{prefix}.l{l}.b"), &[fan_out], fan_in)?;
            layers.push((wid, bid));
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        if x.len() != self.spec.input() {
            return Err(Error::shape(format!(
                "MLP expects input {}, got {}",
                self.spec.input(),
                x.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (&(w, b), &act) in self.layers.iter().zip(&self.spec.activations) {
            let mut a = matvec(store.value(w), &h);
            for (ai, bi) in a.iter_mut().zip(store.value(b).data()) {
                *ai += bi;
            }
            let out = a.iter().map(|&v| act.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, out));
            pre.push(a);
        }
        Ok((
            h,
            MlpCache {
                inputs,
                pre,
                version: store.version(),
            },
        ))
    }

    /// Accumulates parameter gradients into `store`; returns the input gradient.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &MlpCache,
        grad_y: &[f64],
    ) -> Result<Vec<f64>> {
        if cache.version != store.version() {
            return Err(Error::domain(
                "stale MLP cache: parameters changed since forward",
            ));
        }
        if grad_y.len() != self.spec.output() {
            return Err(Error::shape(format!(
                "MLP upstream gradient has {} entries, expected {}",
                grad_y.len(),
                self.spec.output()
            )));
        }
        let mut g = grad_y.to_vec();
        for l in (0..self.layers.len()).rev() {
            let (w, b) = self.layers[l];
            let act = self.spec.activations[l];
            let da: Vec<f64> = g
                .iter()
                .zip(&cache.pre[l])
                .map(|(gi, &p)| gi * act.derivative(p))
                .collect();
            let mut gin = vec![0.0; self.spec.sizes[l]];
            matvec_t_acc(store.value(w), &da, &mut gin);
            outer_acc(store.grad_mut(w), &da, &cache.inputs[l]);
            for (gb, d) in store.grad_mut(b).data_mut().iter_mut().zip(&da) {
                *gb += d;
            }
            g = gin;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_grad, finite_difference_input};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_relu_layer_rectifies() {
        let mut store = ParamStore::new();
        let spec = MlpSpec {
            sizes: vec![3, 3],
            activations: vec![Activation::Relu],
        };
        let mlp = Mlp::register(&mut store, "m", spec).unwrap();
        let w = store.id("m.l0.w").unwrap();
        let eye = store.value_mut(w).data_mut();
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let (y, _) = mlp.forward(&store, &[-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 2.0]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut store = ParamStore::new();
        let mlp = Mlp::register(&mut store, "m", MlpSpec::relu_stack(4, &[5, 5], 2)).unwrap();
        store.init_uniform(&mut ChaCha8Rng::seed_from_u64(1));
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).ends_with(".b") {
                store.value_mut(id).fill(0.0);
            }
        }
        let (y, _) = mlp.forward(&store, &[0.0; 4]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn wrong_input_width_is_an_error() {
        let mut store = ParamStore::new();
        let mlp = Mlp::register(&mut store, "m", MlpSpec::relu_stack(4, &[3], 1)).unwrap();
        assert!(mlp.forward(&store, &[0.0; 3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..5 {
            let mut store = ParamStore::new();
            let mlp = Mlp::register(&mut store, "m", MlpSpec::relu_stack(6, &[7, 5], 3)).unwrap();
            store.init_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |s: &ParamStore, x: &[f64]| -> f64 {
                let (y, _) = mlp.forward(s, x).unwrap();
                y.iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = mlp.forward(&store, &x).unwrap();
            let gx = mlp.backward(&mut store, &cache, &up).unwrap();
            let analytic = store.grads();
            let numeric = finite_difference_grad(&mut store, |s| loss(s, &x), 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                for (&av, &nv) in a.data().iter().zip(n.data()) {
                    assert!(
                        (av - nv).abs() <= 1e-7f64.max(1e-4 * nv.abs()),
                        "{av} vs {nv}"
                    );
                }
            }
            let nx = finite_difference_input(|v| loss(&store, v), &x, 1e-5);
            for (a, n) in gx.iter().zip(&nx) {
                assert!((a - n).abs() <= 1e-7f64.max(1e-4 * n.abs()));
            }
        }
    }
}
