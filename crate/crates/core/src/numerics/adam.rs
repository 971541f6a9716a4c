use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;

/// Bias-corrected Adam. Gradients are left untouched; callers zero them
/// between steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: usize,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    /// Apply one update using the gradients currently in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.t += 1;
        self.step_at(store, self.t)
    }

    /// Apply the update for explicit step index `t >= 1`.
    pub fn step_at(&mut self, store: &mut ParamStore, t: usize) -> Result<()> {
        if t == 0 {
            return Err(Error::Argument("adam step index must be >= 1".into()));
        }
        if self.m.is_empty() {
            for (_, p) in store.iter() {
                self.m.push(Tensor::zeros(p.value.shape()));
                self.v.push(Tensor::zeros(p.value.shape()));
            }
        }
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for (i, p) in store.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for ((val, &g), (mi, vi)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *val -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        self.t = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vec![value])).unwrap();
        s
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // Bias correction gives m_hat = g and v_hat = g^2 on step one, so the
        // update is lr * g / (|g| + eps) which is lr in magnitude.
        for &g in &[0.3, -2.0, 10.0] {
            let mut store = one_param(1.0);
            store.get_mut(store.id_of("w").unwrap()).grad = Tensor::vector(vec![g]);
            let mut adam = Adam::new(0.01);
            adam.step(&mut store).unwrap();
            let moved = 1.0 - store.by_name("w").unwrap().value.data()[0];
            assert!((moved.abs() - 0.01).abs() < 1e-6, "moved {moved}");
            assert_eq!(moved.signum(), g.signum());
        }
    }

    #[test]
    fn zero_grad_leaves_parameter_unchanged() {
        let mut store = one_param(1.5);
        let mut adam = Adam::new(0.01);
        adam.step(&mut store).unwrap();
        assert_eq!(store.by_name("w").unwrap().value.data()[0], 1.5);
    }

    #[test]
    fn constant_grad_decreases_value_monotonically() {
        // Hand iteration of the update rule with g = 1, lr = 0.01: every step
        // has m_hat = 1, v_hat = 1, so each step subtracts ~lr.
        let mut store = one_param(0.0);
        let mut adam = Adam::new(0.01);
        let mut prev = 0.0;
        for _ in 0..2 {
            store.zero_grads();
            let id = store.id_of("w").unwrap();
            store.get_mut(id).grad = Tensor::vector(vec![1.0]);
            adam.step(&mut store).unwrap();
            let cur = store.by_name("w").unwrap().value.data()[0];
            assert!(cur < prev, "expected decrease, got {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn step_index_zero_rejected() {
        let mut store = one_param(0.0);
        let mut adam = Adam::new(0.01);
        assert!(adam.step_at(&mut store, 0).is_err());
    }
}
