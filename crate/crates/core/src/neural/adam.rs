use serde::{Deserialize, Serialize};

use super::model::Params;
use super::tensor::Scalar;
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Scalar>(params: &Params<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients leave the parameters
/// untouched and report divergence.
pub fn adam_step<T: Scalar>(params: &mut Params<T>, grads: &Params<T>, state: &mut AdamState) -> Result<(), NeuralError> {
    let gs = grads.slices();
    if gs.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(NeuralError::Diverged);
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.slices_mut().into_iter().zip(gs).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let gi = g[i].to_f64();
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            p[i] = T::from_f64(p[i].to_f64() - step);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ModelSpec;

    fn spec() -> ModelSpec {
        ModelSpec {
            input_channels: 1,
            output_channels: 1,
            filters: 1,
            blocks_per_path: 0,
            factors: vec![1],
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut p: Params<f64> = Params::zeros(&spec());
        let mut g = Params::zeros(&spec());
        g.convs[0].weight[0] = 3.0;
        g.convs[0].weight[1] = -0.01;
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut st).unwrap();
        assert!((p.convs[0].weight[0] + 1e-4).abs() < 1e-9);
        assert!((p.convs[0].weight[1] - 1e-4).abs() < 1e-9);
        assert_eq!(p.convs[0].weight[2], 0.0);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut p: Params<f32> = Params::zeros(&spec());
        let mut g = Params::zeros(&spec());
        g.convs[0].bias[0] = f32::NAN;
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert_eq!(adam_step(&mut p, &g, &mut st).unwrap_err().to_string(), "diverged");
        assert_eq!(st.t, 0);
    }
}
