//! Adam optimizer over named parameter arrays.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::model::ParamStore;

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// created lazily, so parameters that never receive a gradient (frozen or
/// off-graph) keep no state and are never touched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Apply one update from `grads`. Only named entries present in `grads`
    /// are modified; the shared step counter still advances once per call.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Array2<f64>>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(grad.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(grad.dim()));
            *m = &*m * self.beta1 + grad * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &(grad * grad) * (1.0 - self.beta2);
            let param = store.get_mut(name);
            let m_hat = &*m / bc1;
            let v_hat = &*v / bc2;
            *param = &*param - &(m_hat / (v_hat.mapv(f64::sqrt) + self.epsilon) * self.learning_rate);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store_with(name: &str, value: Array2<f64>) -> ParamStore {
        let mut map = BTreeMap::new();
        map.insert(name.to_string(), value);
        ParamStore::from_arrays(map)
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        // With bias correction, step 1 is exactly -lr * sign(grad) when
        // epsilon is negligible.
        let mut store = store_with("w", array![[1.0, -2.0]]);
        let mut opt = Adam::new(0.1);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), array![[3.0, -0.5]]);
        opt.step(&mut store, &grads);
        let w = store.get("w");
        assert!((w[[0, 0]] - (1.0 - 0.1)).abs() < 1e-7);
        assert!((w[[0, 1]] - (-2.0 + 0.1)).abs() < 1e-7);
    }

    #[test]
    fn matches_scalar_reference_over_many_steps() {
        let mut store = store_with("w", array![[0.5]]);
        let mut opt = Adam::new(0.01);

        // Reference implementation on a scalar, minimizing f(w) = w^2.
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.01);
        let (mut w_ref, mut m, mut v) = (0.5, 0.0, 0.0);
        for t in 1..=200u64 {
            let g_val = 2.0 * store.get("w")[[0, 0]];
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), array![[g_val]]);
            opt.step(&mut store, &grads);

            let g_ref = 2.0 * w_ref;
            m = b1 * m + (1.0 - b1) * g_ref;
            v = b2 * v + (1.0 - b2) * g_ref * g_ref;
            let m_hat = m / (1.0 - b1f64(b1, t));
            let v_hat = v / (1.0 - b1f64(b2, t));
            w_ref -= lr * m_hat / (v_hat.sqrt() + eps);

            assert!(
                (store.get("w")[[0, 0]] - w_ref).abs() < 1e-12,
                "diverged at step {t}"
            );
        }
        assert!(store.get("w")[[0, 0]].abs() < 0.5);
    }

    fn b1f64(b: f64, t: u64) -> f64 {
        b.powi(t as i32)
    }

    #[test]
    fn absent_gradients_leave_parameters_untouched() {
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), array![[1.0]]);
        map.insert("b".to_string(), array![[2.0]]);
        let mut store = ParamStore::from_arrays(map);
        let mut opt = Adam::new(0.1);
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), array![[1.0]]);
        opt.step(&mut store, &grads);
        assert_eq!(store.get("b")[[0, 0]].to_bits(), 2.0f64.to_bits());
        assert_ne!(store.get("a")[[0, 0]], 1.0);
    }
}
