use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every non-frozen parameter from its gradient
    /// buffer, then clears all gradient buffers.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        if self.first.len() != store.len() {
            self.first = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let bc1 = T::one() - T::lit(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::lit(c.beta2.powi(self.step as i32));

        for (i, p) in store.iter_mut().enumerate() {
            if !p.frozen {
                let m = self.first[i].data_mut();
                let v = self.second[i].data_mut();
                for (k, (w, &g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
                    m[k] = b1 * m[k] + (T::one() - b1) * g;
                    v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(v)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = scalar_store(0.7);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut s);
        assert_eq!(s.by_name("w").unwrap().value.data(), &[0.7]);
    }

    #[test]
    fn frozen_parameter_is_untouched() {
        let mut s = scalar_store(0.7);
        let id = s.id("w").unwrap();
        s.get_mut(id).frozen = true;
        s.get_mut(id).grad = Tensor::scalar(3.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut s);
        assert_eq!(s.get(id).value.data()[0].to_bits(), 0.7f64.to_bits());
        assert_eq!(s.get(id).grad.data(), &[0.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // scalar oracle: m̂ = g, v̂ = g², step = lr·g/(|g| + eps)
        let mut s = scalar_store(0.0);
        let id = s.id("w").unwrap();
        s.get_mut(id).grad = Tensor::scalar(1.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(&mut s);
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((s.get(id).value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn constant_gradient_matches_scalar_recursion() {
        let mut s = scalar_store(1.0);
        let id = s.id("w").unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.01));
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=20 {
            let g = 2.0 * w;
            s.get_mut(id).grad = Tensor::scalar(2.0 * s.get(id).value.data()[0]);
            adam.step(&mut s);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((s.get(id).value.data()[0] - w).abs() < 1e-12);
    }
}
