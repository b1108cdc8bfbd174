use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

/// Optimizer with its per-parameter moment buffers. Owned by one training loop.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self, NumericsError> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(NumericsError::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = kind {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return Err(NumericsError::Config(format!(
                    "adam needs beta1, beta2 in [0,1) and epsilon > 0 (got {beta1}, {beta2}, {epsilon})"
                )));
            }
        }
        Ok(Self {
            kind,
            learning_rate,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every tensor of `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::Shape(format!(
                "optimizer: {} parameter tensors vs {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.tensors().iter().zip(grads.tensors()).enumerate() {
            if p.shape() != g.shape() {
                return Err(NumericsError::Shape(format!(
                    "optimizer: tensor {i} is {:?} but its gradient is {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        if self.first_moment.is_empty() && matches!(self.kind, OptimizerKind::Adam { .. }) {
            self.first_moment = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        self.step_count += 1;
        for (i, (p, g)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .enumerate()
        {
            self.update(i, p.as_mut_slice(), g.as_slice());
        }
        Ok(())
    }

    /// Single-tensor convenience used when a model keeps one flat buffer.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::Shape(format!(
                "optimizer: {} parameters vs {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if let Some(m) = self.first_moment.first() {
            if m.len() != params.len() {
                return Err(NumericsError::Shape("moment buffers do not match parameters".into()));
            }
        } else if matches!(self.kind, OptimizerKind::Adam { .. }) {
            self.first_moment = vec![vec![0.0; params.len()]];
            self.second_moment = vec![vec![0.0; params.len()]];
        }
        self.step_count += 1;
        self.update(0, params, grads);
        Ok(())
    }

    fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let m = &mut self.first_moment[slot];
                let v = &mut self.second_moment[slot];
                for j in 0..params.len() {
                    let g = grads[j];
                    m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    params[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
    }
}
