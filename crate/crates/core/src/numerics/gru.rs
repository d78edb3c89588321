//! Gated recurrent unit, reset gate applied before the candidate projection:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use serde::{Deserialize, Serialize};

use super::ops::{matvec, matvec_t_acc, outer_acc, sigmoid};
use super::{ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruSpec {
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
struct Gate {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub struct GruCell {
    spec: GruSpec,
    update: Gate,
    reset: Gate,
    candidate: Gate,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    cand: Vec<f64>,
    version: u64,
}

impl GruCell {
    pub fn register(store: &mut ParamStore, prefix: &str, spec: GruSpec) -> Result<Self> {
        if spec.input == 0 || spec.hidden == 0 {
            return Err(Error::shape(format!(
                "GRU sizes must be positive: {spec:?}"
            )));
        }
        let fan_in = spec.input + spec.hidden;
        let mut gate = |tag: &str| -> Result<Gate> {
            Ok(Gate {
                w: store.add(
                    &format!("{prefix}.w_{tag}"),
                    &[spec.hidden, spec.input],
                    fan_in,
                )?,
                u: store.add(
                    &format!("{prefix}.u_{tag}"),
                    &[spec.hidden, spec.hidden],
                    fan_in,
                )?,
                b: store.add(&format!("{prefix}.b_{tag}"), &[spec.hidden], fan_in)?,
            })
        };
        Ok(Self {
            spec,
            update: gate("z")?,
            reset: gate("r")?,
            candidate: gate("h")?,
        })
    }

    pub fn spec(&self) -> GruSpec {
        self.spec
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &[f64],
        h_prev: &[f64],
    ) -> Result<(Vec<f64>, GruCache)> {
        if x.len() != self.spec.input || h_prev.len() != self.spec.hidden {
            return Err(Error::shape(format!(
                "GRU expects input {} / hidden {}, got {} / {}",
                self.spec.input,
                self.spec.hidden,
                x.len(),
                h_prev.len()
            )));
        }
        let pre = |g: &Gate, state: &[f64]| -> Vec<f64> {
            let mut a = matvec(store.value(g.w), x);
            let u = matvec(store.value(g.u), state);
            for ((ai, ui), bi) in a.iter_mut().zip(&u).zip(store.value(g.b).data()) {
                *ai += ui + bi;
            }
            a
        };
        let z: Vec<f64> = pre(&self.update, h_prev).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = pre(&self.reset, h_prev).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = pre(&self.candidate, &rh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h_new = (0..self.spec.hidden)
            .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
            .collect();
        Ok((
            h_new,
            GruCache {
                x: x.to_vec(),
                h_prev: h_prev.to_vec(),
                z,
                r,
                rh,
                cand,
                version: store.version(),
            },
        ))
    }

    /// Accumulates parameter gradients into `store`; returns
    /// `(grad_x, grad_h_prev)`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &GruCache,
        grad_h: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if cache.version != store.version() {
            return Err(Error::domain(
                "stale GRU cache: parameters changed since forward",
            ));
        }
        if grad_h.len() != self.spec.hidden {
            return Err(Error::shape(format!(
                "GRU upstream gradient has {} entries, expected {}",
                grad_h.len(),
                self.spec.hidden
            )));
        }
        let n = self.spec.hidden;
        let mut gx = vec![0.0; self.spec.input];
        let mut gh = vec![0.0; n];
        let mut d_cand = vec![0.0; n];
        let mut d_z = vec![0.0; n];
        for i in 0..n {
            let g = grad_h[i];
            gh[i] = g * (1.0 - cache.z[i]);
            let dz = g * (cache.cand[i] - cache.h_prev[i]);
            d_z[i] = dz * cache.z[i] * (1.0 - cache.z[i]);
            d_cand[i] = g * cache.z[i] * (1.0 - cache.cand[i] * cache.cand[i]);
        }

        let mut d_rh = vec![0.0; n];
        matvec_t_acc(store.value(self.candidate.w), &d_cand, &mut gx);
        matvec_t_acc(store.value(self.candidate.u), &d_cand, &mut d_rh);
        let d_r: Vec<f64> = (0..n)
            .map(|i| d_rh[i] * cache.h_prev[i] * cache.r[i] * (1.0 - cache.r[i]))
            .collect();
        for i in 0..n {
            gh[i] += d_rh[i] * cache.r[i];
        }
        matvec_t_acc(store.value(self.reset.w), &d_r, &mut gx);
        matvec_t_acc(store.value(self.reset.u), &d_r, &mut gh);
        matvec_t_acc(store.value(self.update.w), &d_z, &mut gx);
        matvec_t_acc(store.value(self.update.u), &d_z, &mut gh);

        accumulate(store, &self.candidate, &d_cand, &cache.x, &cache.rh);
        accumulate(store, &self.reset, &d_r, &cache.x, &cache.h_prev);
        accumulate(store, &self.update, &d_z, &cache.x, &cache.h_prev);
        Ok((gx, gh))
    }
}

fn accumulate(store: &mut ParamStore, gate: &Gate, d: &[f64], x: &[f64], state: &[f64]) {
    outer_acc(store.grad_mut(gate.w), d, x);
    outer_acc(store.grad_mut(gate.u), d, state);
    for (g, &di) in store.grad_mut(gate.b).data_mut().iter_mut().zip(d) {
        *g += di;
    }
}
