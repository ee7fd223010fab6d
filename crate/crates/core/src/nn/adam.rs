use serde::{Deserialize, Serialize};

use super::{MlpSpec, ParameterSet};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParameterSet,
    pub v: ParameterSet,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(spec: &MlpSpec, config: AdamConfig) -> Self {
        Self {
            m: ParameterSet::zeros(spec),
            v: ParameterSet::zeros(spec),
            t: 0,
            config,
        }
    }

    /// Applies one descent step (`params -= lr * m_hat / (sqrt(v_hat) + eps)`).
    ///
    /// Non-finite gradients are rejected before any state is touched.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet, lr: f64) -> Result<()> {
        ensure!(
            params.layers.len() == grads.layers.len() && params.layers.len() == self.m.layers.len(),
            Contract,
            "optimizer, parameter and gradient layer counts differ"
        );
        for (p, g) in params.layers.iter().zip(&grads.layers) {
            ensure!(
                p.weight.dim() == g.weight.dim() && p.bias.len() == g.bias.len(),
                Contract,
                "gradient shape does not match parameters"
            );
        }
        ensure!(
            grads.is_finite(),
            Numeric,
            "non-finite gradient (norm {}); update rejected",
            grads.l2_norm()
        );

        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let blocks = params
            .blocks_mut()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut().zip(self.v.blocks_mut()));
        for ((p, g), (m, v)) in blocks {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        params.version += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;

    fn scalar_spec() -> MlpSpec {
        MlpSpec::new(vec![1, 1], OutputActivation::Identity).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let spec = MlpSpec::new(vec![3, 4, 2], OutputActivation::Identity).unwrap();
        let mut params = ParameterSet::zeros(&spec);
        params.layers[0].weight.fill(0.7);
        let before = params.flatten();
        let mut adam = AdamState::new(&spec, AdamConfig::default());
        adam.step(&mut params, &ParameterSet::zeros(&spec), 0.1).unwrap();
        assert_eq!(params.flatten(), before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 on the first step, so the move is lr * g / (|g| + eps).
        let spec = scalar_spec();
        let mut params = ParameterSet::zeros(&spec);
        let mut grads = ParameterSet::zeros(&spec);
        grads.layers[0].weight[[0, 0]] = 1.0;
        let mut adam = AdamState::new(&spec, AdamConfig::default());
        adam.step(&mut params, &grads, 0.1).unwrap();
        let delta = params.layers[0].weight[[0, 0]];
        assert!((delta - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(params.version, 1);
    }

    #[test]
    fn identical_calls_are_deterministic() {
        let spec = MlpSpec::new(vec![2, 3, 1], OutputActivation::Identity).unwrap();
        let mut grads = ParameterSet::zeros(&spec);
        grads.layers[0].weight.fill(0.3);
        grads.layers[1].bias.fill(-2.0);
        let run = || {
            let mut p = ParameterSet::zeros(&spec);
            let mut a = AdamState::new(&spec, AdamConfig::default());
            for _ in 0..3 {
                a.step(&mut p, &grads, 0.01).unwrap();
            }
            (p, a)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let spec = scalar_spec();
        let mut params = ParameterSet::zeros(&spec);
        let mut grads = ParameterSet::zeros(&spec);
        grads.layers[0].bias[0] = f64::NAN;
        let mut adam = AdamState::new(&spec, AdamConfig::default());
        assert!(adam.step(&mut params, &grads, 0.1).is_err());
        assert_eq!(adam.t, 0);
        assert_eq!(params.version, 0);
    }
}
