//! Adam optimizer over raw parameter buffers.

use crate::error::{Error, Result};
use crate::tensor::Element;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub kind: String,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: "adam".into(),
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind != "adam" {
            return Err(Error::config(format!(
                "unknown optimizer kind '{}' (only 'adam' is available)",
                self.kind
            )));
        }
        if self.lr <= 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(Error::config("invalid adam hyperparameters"));
        }
        Ok(())
    }
}

/// Per-parameter first/second moment state plus the shared step counter.
pub struct Adam {
    cfg: OptimConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: OptimConfig, param_sizes: &[usize]) -> Result<Self> {
        cfg.validate()?;
        Ok(Adam {
            cfg,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// One update; `params[i]` and `grads[i]` must line up with the sizes the
    /// optimizer was built with. Gradients must be finite.
    pub fn step<E: Element>(&mut self, params: &mut [Vec<E>], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract("optimizer state does not match parameters"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.len() != g.len() {
                return Err(Error::contract("gradient length mismatch"));
            }
            for i in 0..p.len() {
                let gi = g[i];
                if !gi.is_finite() {
                    return Err(Error::Numeric("non-finite gradient in optimizer".into()));
                }
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * gi;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let delta = self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
                p[i] = E::from_f64(p[i].to_f64() - delta);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        // f(x) = (x - 3)^2
        let cfg = OptimConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &[1]).unwrap();
        let mut params: Vec<Vec<f64>> = vec![vec![0.0]];
        for _ in 0..500 {
            let g = 2.0 * (params[0][0] - 3.0);
            adam.step(&mut params, &[vec![g]]).unwrap();
        }
        assert!((params[0][0] - 3.0).abs() < 0.05, "{}", params[0][0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = OptimConfig {
            lr: 0.01,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &[1]).unwrap();
        let mut params: Vec<Vec<f64>> = vec![vec![1.0]];
        adam.step(&mut params, &[vec![5.0]]).unwrap();
        // bias-corrected adam moves ~lr on the first step regardless of
        // gradient magnitude
        assert!((params[0][0] - (1.0 - 0.01)).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut adam = Adam::new(OptimConfig::default(), &[1]).unwrap();
        let mut params: Vec<Vec<f64>> = vec![vec![1.0]];
        assert!(adam.step(&mut params, &[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig {
            kind: "sgd".into(),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimConfig {
            lr: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
