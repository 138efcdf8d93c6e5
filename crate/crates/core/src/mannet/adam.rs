//! Adam optimizer over a fixed list of weight vectors.

use crate::linalg::RVec;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment state per parameter vector plus the shared step
/// counter used for bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<RVec>,
    v: Vec<RVec>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            cfg,
            m: shapes.iter().map(|&n| RVec::zeros(n)).collect(),
            v: shapes.iter().map(|&n| RVec::zeros(n)).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [&mut RVec], grads: &[RVec]) {
        assert_eq!(params.len(), self.m.len(), "parameter group count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient group count changed");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = Adam::new(AdamConfig::default(), &[3]);
        let mut p = RVec::from_vec(vec![1.0, -2.0, 0.5]);
        let g = vec![RVec::zeros(3)];
        let before = p.clone();
        {
            let mut params = vec![&mut p];
            adam.step(&mut params, &g);
        }
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn constant_gradient_step_approaches_learning_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &[1]);
        let mut p = RVec::from_vec(vec![0.0]);
        let g = vec![RVec::from_vec(vec![0.37])];
        let mut last = p[0];
        let mut step_size = 0.0;
        for _ in 0..500 {
            let mut params = vec![&mut p];
            adam.step(&mut params, &g);
            drop(params);
            step_size = (p[0] - last).abs();
            last = p[0];
        }
        assert!((step_size - 0.01).abs() < 1e-4, "step {step_size}");
    }

    #[test]
    fn matches_hand_recursion_three_steps() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut adam = Adam::new(cfg.clone(), &[1]);
        let grads = [0.3, -0.2, 0.05];
        let mut p = RVec::from_vec(vec![1.0]);
        // Hand recursion.
        let (mut m, mut v, mut theta) = (0.0_f64, 0.0_f64, 1.0_f64);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);

            let gv = vec![RVec::from_vec(vec![g])];
            let mut params = vec![&mut p];
            adam.step(&mut params, &gv);
        }
        assert!((p[0] - theta).abs() < 1e-12);
    }
}
