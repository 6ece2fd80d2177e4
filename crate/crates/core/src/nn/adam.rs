use super::params::{Gradients, ModelParams};
use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one entry per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> AdamState {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        settings: &AdamSettings,
    ) -> Result<(), ModelError> {
        for len in [grads.len(), self.m.len(), self.v.len()] {
            if len != params.len() {
                return Err(ModelError::ShapeMismatch {
                    expected: params.len(),
                    actual: len,
                });
            }
        }
        self.t += 1;
        let AdamSettings {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = *settings;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((theta, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

impl ModelParams {
    pub fn adam_step(
        &mut self,
        grads: &Gradients,
        state: &mut AdamState,
        settings: &AdamSettings,
    ) -> Result<(), ModelError> {
        state.step(self.values_mut(), &grads.values, settings)
    }
}
