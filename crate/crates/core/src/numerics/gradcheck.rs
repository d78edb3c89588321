//! Central finite differences, used as the independent oracle for every
//! hand-written backward pass.

use super::{ParamStore, Tensor};

/// `∂f/∂θ` for every element of every parameter, by central differences
/// with step `h`. Parameter values are restored afterwards.
pub fn finite_difference_grad<F>(store: &mut ParamStore, mut f: F, h: f64) -> Vec<Tensor>
where
    F: FnMut(&ParamStore) -> f64,
{
    let ids: Vec<_> = store.ids().collect();
    let mut grads = Vec::with_capacity(ids.len());
    for id in ids {
        let mut g = Tensor::zeros(store.value(id).shape());
        for k in 0..g.len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + h;
            let plus = f(store);
            store.value_mut(id).data_mut()[k] = orig - h;
            let minus = f(store);
            store.value_mut(id).data_mut()[k] = orig;
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Central-difference gradient of a function of a plain vector.
pub fn finite_difference_input<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let plus = f(&probe);
            probe[k] = orig - h;
            let minus = f(&probe);
            probe[k] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let id = store.add("theta", &[1], 1).unwrap();
        store.value_mut(id).data_mut()[0] = 3.0;
        let g = finite_difference_grad(
            &mut store,
            |s| {
                let t = s.value(id).data()[0];
                t * t
            },
            1e-5,
        );
        assert!((g[0].data()[0] - 6.0).abs() < 1e-9);
        assert_eq!(store.value(id).data()[0], 3.0);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut store = ParamStore::new();
        store.add("w", &[2, 3], 3).unwrap();
        let g = finite_difference_grad(&mut store, |_| 4.2, 1e-5);
        assert!(g[0].data().iter().all(|&v| v == 0.0));
    }
}
