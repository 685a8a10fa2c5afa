//! Adam with global gradient-norm clipping.

use piloc_core::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive moment estimation over a flat parameter array.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
        }
    }

    pub fn apply(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let eps = T::of(self.config.epsilon);
        let lr = T::of(self.config.learning_rate);
        let corr1 = T::one() - T::of(self.config.beta1.powi(self.step as i32));
        let corr2 = T::one() - T::of(self.config.beta2.powi(self.step as i32));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / corr1;
            let v_hat = self.v[i] / corr2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Scale `grads` so its global L2 norm is at most `max_norm`; returns the
/// pre-clip norm.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [T], max_norm: T) -> T {
    let norm = grads
        .iter()
        .map(|&g| g * g)
        .sum::<T>()
        .sqrt();
    if norm > max_norm && norm > T::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}
