use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{GradError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

#[derive(Clone, Debug, PartialEq)]
struct AdamState {
    step: u64,
    m: Tensor,
    v: Tensor,
}

/// Named trainable tensors with Adam moments, plus untrained buffers such
/// as normalization running statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
    state: IndexMap<String, AdamState>,
    buffers: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a trainable tensor, resetting its moments.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        let zeros = Tensor::zeros(value.raw_dim());
        self.state.insert(
            name.clone(),
            AdamState {
                step: 0,
                m: zeros.clone(),
                v: zeros,
            },
        );
        self.params.insert(name, value);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, GradError> {
        self.params
            .get(name)
            .ok_or_else(|| GradError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, GradError> {
        self.params
            .get_mut(name)
            .ok_or_else(|| GradError::UnknownParameter(name.to_string()))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor, GradError> {
        self.buffers
            .get(name)
            .ok_or_else(|| GradError::UnknownParameter(name.to_string()))
    }

    pub fn buffer_mut(&mut self, name: &str) -> Result<&mut Tensor, GradError> {
        self.buffers
            .get_mut(name)
            .ok_or_else(|| GradError::UnknownParameter(name.to_string()))
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Bias-corrected Adam update of every parameter named in `grads`.
    pub fn adam_step(
        &mut self,
        grads: &IndexMap<String, Tensor>,
        cfg: &AdamConfig,
    ) -> Result<(), GradError> {
        for (name, g) in grads {
            let p = self
                .params
                .get(name)
                .ok_or_else(|| GradError::UnknownParameter(name.clone()))?;
            if p.dim() != g.dim() {
                return Err(GradError::Shape {
                    op: "adam_step",
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
        }
        for (name, g) in grads {
            let st = self.state.get_mut(name).expect("state tracks params");
            let p = self.params.get_mut(name).expect("checked above");
            st.step += 1;
            let t = st.step as i32;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            ndarray::Zip::from(p)
                .and(&mut st.m)
                .and(&mut st.v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
                });
        }
        Ok(())
    }
}
