//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::featurizer::SparseVector;
use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

/// Parameters plus first/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub params: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn zeros(len: usize) -> Self {
        Self::from_params(vec![0.0; len])
    }

    pub fn from_params(params: Vec<f64>) -> Self {
        let len = params.len();
        Self {
            params,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
        }
    }
}

impl AdamW {
    #[inline]
    fn update(&self, p: &mut f64, m: &mut f64, v: &mut f64, g: f64, bc1: f64, bc2: f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p * (1.0 - self.learning_rate * self.weight_decay)
            - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
    }

    fn corrections(&self, step: u64) -> (f64, f64) {
        let t = step as f64;
        (1.0 - self.beta1.powf(t), 1.0 - self.beta2.powf(t))
    }

    /// One step with a gradient covering every parameter.
    pub fn step_dense(&self, state: &mut OptimizerState, grad: &[f64]) -> Result<(), LearnerError> {
        if grad.len() != state.params.len() {
            return Err(LearnerError::DimensionMismatch {
                expected: state.params.len(),
                found: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LearnerError::NonFiniteGradient);
        }
        state.step_count += 1;
        let (bc1, bc2) = self.corrections(state.step_count);
        for (((p, m), v), &g) in state.params.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(grad) {
            self.update(p, m, v, g, bc1, bc2);
        }
        Ok(())
    }

    /// Same update as [`AdamW::step_dense`] with absent entries read as
    /// zero gradient; moments and decay still touch every parameter.
    pub fn step_sparse(&self, state: &mut OptimizerState, grad: &SparseVector) -> Result<(), LearnerError> {
        if let Some(&(i, _)) = grad.entries().last() {
            if i as usize >= state.params.len() {
                return Err(LearnerError::DimensionMismatch {
                    expected: state.params.len(),
                    found: i as usize + 1,
                });
            }
        }
        if grad.entries().iter().any(|(_, g)| !g.is_finite()) {
            return Err(LearnerError::NonFiniteGradient);
        }
        state.step_count += 1;
        let (bc1, bc2) = self.corrections(state.step_count);
        let mut pending = grad.entries().iter().peekable();
        for (i, ((p, m), v)) in state.params.iter_mut().zip(&mut state.m).zip(&mut state.v).enumerate() {
            let g = match pending.peek() {
                Some(&&(j, g)) if j as usize == i => {
                    pending.next();
                    g
                }
                _ => 0.0,
            };
            self.update(p, m, v, g, bc1, bc2);
        }
        Ok(())
    }
}
