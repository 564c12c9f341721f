//! Adaptive-moment optimizer with bias correction.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    shapes: Vec<(usize, usize)>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes
                .iter()
                .map(|(r, c)| alloc::vec![0.0; r * c])
                .collect(),
            second: shapes
                .iter()
                .map(|(r, c)| alloc::vec![0.0; r * c])
                .collect(),
            shapes: shapes.to_vec(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter in place.
    pub fn step<T: Real>(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
    ) -> Result<()> {
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(Error::Shape {
                op: "adam_step",
                left: (self.shapes.len(), 1),
                right: (params.len(), grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.shapes[i] || g.shape() != self.shapes[i] {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: self.shapes[i],
                    right: g.shape(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gk = gk.to_f64();
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                let update = lr * m_hat / (libm::sqrt(v_hat) + eps);
                *w = T::from_f64(w.to_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(1, 3, vec![0.5f64, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), &[(1, 3)]);
        st.step(&mut [&mut p], &[Tensor::zeros(1, 3)]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Tensor::from_vec(1, 3, vec![0.0f64, 0.0, 0.0]).unwrap();
        let g = Tensor::from_vec(1, 3, vec![0.3f64, -4.0, 1e-3]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &[(1, 3)]);
        st.step(&mut [&mut p], core::slice::from_ref(&g)).unwrap();
        for (w, gk) in p.data().iter().zip(g.data()) {
            assert!(w.abs() <= 1e-3 * (1.0 + 1e-4));
            assert!((w + 1e-3 * gk.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn three_step_scalar_trace() {
        // Hand-rolled scalar oracle.
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let grads = [0.5, -0.2, 0.1];
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut p = Tensor::row_vector(vec![1.0f64]);
        let mut st = AdamState::new(AdamConfig::with_lr(lr), &[(1, 1)]);
        for g in grads {
            st.step(&mut [&mut p], &[Tensor::row_vector(vec![g])])
                .unwrap();
        }
        assert!((p.get(0, 0) - w).abs() < 1e-7);
        assert_eq!(st.step_count(), 3);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::<f32>::zeros(2, 2);
        let mut st = AdamState::new(AdamConfig::default(), &[(2, 2)]);
        assert!(st.step(&mut [&mut p], &[Tensor::zeros(1, 2)]).is_err());
    }
}
