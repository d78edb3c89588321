//! Vector kernels. Matrices are `Tensor`s of shape `[rows, cols]`.

use super::Tensor;
use crate::{Error, Result};

/// `w · x` for a `[rows, cols]` matrix.
pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.cols();
    debug_assert_eq!(cols, x.len());
    w.data().chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// `out += wᵀ · g`.
pub fn matvec_t_acc(w: &Tensor, g: &[f64], out: &mut [f64]) {
    let cols = w.cols();
    debug_assert_eq!(cols, out.len());
    for (row, &gi) in w.data().chunks_exact(cols).zip(g) {
        if gi == 0.0 {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += gi * wij;
        }
    }
}

/// `grad += g ⊗ x`.
pub fn outer_acc(grad: &mut Tensor, g: &[f64], x: &[f64]) {
    let cols = grad.cols();
    debug_assert_eq!(cols, x.len());
    for (row, &gi) in grad.data_mut().chunks_exact_mut(cols).zip(g) {
        if gi == 0.0 {
            continue;
        }
        for (r, &xj) in row.iter_mut().zip(x) {
            *r += gi * xj;
        }
    }
}

pub fn add_acc(out: &mut [f64], x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += v;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("softmax input {logits:?}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::shape("log_softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("log_softmax input {logits:?}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|v| v - lse).collect())
}

/// Mean squared elementwise error.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "frame dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}
