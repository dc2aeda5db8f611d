//! Named parameter store with per-parameter Adam moments and a lossless
//! JSON checkpoint format.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
    adam_m: Tensor,
    adam_v: Tensor,
}

/// All trainable tensors of a model, keyed by unique names. Iteration order
/// is the sorted name order, which keeps training trajectories reproducible.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    steps: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(NeuralError::Invalid(format!("duplicate parameter {name:?}")));
        }
        let shape = value.shape();
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                value,
                grad: Tensor::zeros(shape),
                adam_m: Tensor::zeros(shape),
                adam_v: Tensor::zeros(shape),
            },
        );
        Ok(())
    }

    /// Xavier-style normal initialization for a 2-D weight.
    pub fn init_matrix<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<()> {
        let scale = (2.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| normal(rng) * scale).collect();
        self.insert(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn init_zero_vector(&mut self, name: &str, len: usize) -> Result<()> {
        self.insert(name, Tensor::zeros(Shape::D1(len)))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NeuralError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NeuralError::MissingParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.grad)
            .ok_or_else(|| NeuralError::MissingParam(name.to_string()))
    }

    pub(crate) fn grad_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.grad)
            .ok_or_else(|| NeuralError::MissingParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.entries.values().map(|e| e.value.data().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.grad.data_mut().fill(0.0);
        }
    }

    /// One Adam update over every parameter from the accumulated gradients.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for entry in self.entries.values_mut() {
            let g = entry.grad.data();
            let m = entry.adam_m.data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
            }
            let v = entry.adam_v.data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            }
            let m = entry.adam_m.data();
            let v = entry.adam_v.data();
            let theta = entry.value.data_mut();
            for ((ti, mi), vi) in theta.iter_mut().zip(m).zip(v) {
                let m_hat = mi / bias1;
                let v_hat = vi / bias2;
                *ti -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Checkpoint with values only; optimizer moments restart on load.
    pub fn to_checkpoint_json(&self) -> String {
        let cp = Checkpoint {
            tensors: self
                .entries
                .iter()
                .map(|(k, e)| (k.clone(), e.value.clone()))
                .collect(),
        };
        serde_json::to_string(&cp).expect("checkpoint serialization cannot fail")
    }

    pub fn from_checkpoint_json(json: &str) -> Result<ParamStore> {
        let cp: Checkpoint =
            serde_json::from_str(json).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let mut store = ParamStore::new();
        for (name, tensor) in cp.tensors {
            store.insert(&name, tensor)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
        ParamStore::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }
}

/// Standard normal draw via Box-Muller.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}
