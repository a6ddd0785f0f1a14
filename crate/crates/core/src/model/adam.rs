use super::params::{Mat, Params};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[&Mat]) -> Self {
        AdamState {
            step: 0,
            first: shapes.iter().map(|m| vec![0.0; m.data.len()]).collect(),
            second: shapes.iter().map(|m| vec![0.0; m.data.len()]).collect(),
        }
    }

    pub fn for_params(params: &Params) -> Self {
        Self::new(&params.blocks())
    }

    /// One bias-corrected update over parallel lists of blocks. Rejects the
    /// whole update if any gradient entry is non-finite.
    pub fn step_blocks(&mut self, params: &mut [&mut Mat], grads: &[&Mat], cfg: &AdamConfig) -> Result<(), ModelError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(ModelError::Config(format!(
                "optimizer tracks {} blocks, got {} parameter and {} gradient blocks",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.data.len() != self.first[b].len() || g.data.len() != p.data.len() {
                return Err(ModelError::Config(format!("block {b}: shape mismatch")));
            }
            if let Some(i) = g.data.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(format!("gradient block {b} entry {i} is {}", g.data[i])));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - cfg.beta1.powf(t);
        let c2 = 1.0 - cfg.beta2.powf(t);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[b], &mut self.second[b]);
            for (((theta, &gi), mi), vi) in p.data.iter_mut().zip(&g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }

    pub fn step_params(&mut self, params: &mut Params, grads: &Params, cfg: &AdamConfig) -> Result<(), ModelError> {
        let mut p = params.blocks_mut();
        self.step_blocks(&mut p, &grads.blocks(), cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Mat {
        Mat { rows: 1, cols: 1, data: vec![v] }
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut theta = scalar(0.0);
        let mut st = AdamState::new(&[&theta]);
        st.step_blocks(&mut [&mut theta], &[&scalar(1.0)], &cfg).unwrap();
        let expected = -cfg.learning_rate * 1.0 / (1.0 + cfg.epsilon);
        assert!((theta.data[0] - expected).abs() < 1e-15);
        assert!((theta.data[0] + 0.000999999).abs() < 1e-9);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn two_steps_hand_unrolled() {
        let (lr, b1, b2, eps): (f64, f64, f64, f64) = (1e-3, 0.9, 0.999, 1e-8);
        let mut theta = scalar(0.0);
        let mut st = AdamState::new(&[&theta]);
        let cfg = AdamConfig::default();
        for _ in 0..2 {
            st.step_blocks(&mut [&mut theta], &[&scalar(1.0)], &cfg).unwrap();
        }
        let m1 = (1.0 - b1) * 1.0;
        let v1 = (1.0 - b2) * 1.0;
        let t1 = 0.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1);
        let v2 = b2 * v1 + (1.0 - b2);
        let t2 = t1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((theta.data[0] - t2).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut theta = Mat { rows: 2, cols: 2, data: vec![0.3, -1.0, 2.0, 5.5] };
        let before = theta.clone();
        let mut st = AdamState::new(&[&theta]);
        st.step_blocks(&mut [&mut theta], &[&Mat::zeros(2, 2)], &AdamConfig::default()).unwrap();
        assert_eq!(theta, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut theta = scalar(1.0);
        let mut st = AdamState::new(&[&theta]);
        let err = st.step_blocks(&mut [&mut theta], &[&scalar(f64::NAN)], &AdamConfig::default());
        assert!(matches!(err, Err(ModelError::NonFinite(_))));
        assert_eq!((theta.data[0], st.step), (1.0, 0));
    }
}
