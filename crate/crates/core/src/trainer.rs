//! Local update producers. The protocol only sees the returned vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Produces a client's local update from the current global parameters.
pub trait Trainer: Send + Sync {
    fn dimension(&self) -> usize;
    fn train(&self, params: &[f64], client_seed: u64) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainerKind {
    Synthetic,
    Linear {
        samples: usize,
        learning_rate: f64,
        epochs: u32,
    },
}

/// Run-config entry selecting a trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerSpec {
    #[serde(flatten)]
    pub kind: TrainerKind,
    pub dimension: usize,
    pub data_seed: u64,
    /// Clamp applied to every output coordinate.
    #[serde(default = "default_bound")]
    pub bound: f64,
}

fn default_bound() -> f64 {
    1024.0
}

impl TrainerSpec {
    pub fn synthetic(dimension: usize, data_seed: u64) -> Self {
        Self {
            kind: TrainerKind::Synthetic,
            dimension,
            data_seed,
            bound: default_bound(),
        }
    }

    pub fn linear(dimension: usize, data_seed: u64) -> Self {
        Self {
            kind: TrainerKind::Linear {
                samples: 64,
                learning_rate: 0.1,
                epochs: 1,
            },
            dimension,
            data_seed,
            bound: default_bound(),
        }
    }

    pub fn build(&self) -> Box<dyn Trainer> {
        match self.kind {
            TrainerKind::Synthetic => Box::new(SyntheticTrainer {
                dimension: self.dimension,
                data_seed: self.data_seed,
            }),
            TrainerKind::Linear {
                samples,
                learning_rate,
                epochs,
            } => Box::new(LinearTrainer {
                features: self.dimension,
                samples,
                learning_rate,
                epochs,
                data_seed: self.data_seed,
                bound: self.bound,
            }),
        }
    }
}

/// `local_train` for a spec, without holding on to the trainer.
pub fn local_train(spec: &TrainerSpec, params: &[f64], client_seed: u64) -> Vec<f64> {
    spec.build().train(params, client_seed)
}

fn client_rng(data_seed: u64, client_seed: u64) -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&data_seed.to_be_bytes());
    seed[8..16].copy_from_slice(&client_seed.to_be_bytes());
    ChaCha20Rng::from_seed(seed)
}

/// Seeded uniform vectors in `[-1, 1]^d`; ignores the global parameters.
#[derive(Clone, Debug)]
pub struct SyntheticTrainer {
    pub dimension: usize,
    pub data_seed: u64,
}

impl Trainer for SyntheticTrainer {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn train(&self, _params: &[f64], client_seed: u64) -> Vec<f64> {
        let mut rng = client_rng(self.data_seed, client_seed);
        (0..self.dimension).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    }
}

/// Least-squares regression on seeded synthetic data; returns the weight delta
/// after `epochs` full-batch gradient steps.
#[derive(Clone, Debug)]
pub struct LinearTrainer {
    pub features: usize,
    pub samples: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    pub data_seed: u64,
    pub bound: f64,
}

/// One client's regression data.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl LinearTrainer {
    /// Ground-truth weights shared by all clients of a task.
    pub fn true_weights(&self) -> Vec<f64> {
        let mut rng = client_rng(self.data_seed, u64::MAX);
        (0..self.features).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    }

    pub fn dataset(&self, client_seed: u64) -> Dataset {
        let w = self.true_weights();
        let mut rng = client_rng(self.data_seed, client_seed);
        let mut x = Vec::with_capacity(self.samples);
        let mut y = Vec::with_capacity(self.samples);
        for _ in 0..self.samples {
            let row: Vec<f64> = (0..self.features).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let noise: f64 = rng.gen_range(-0.01..=0.01);
            y.push(dot(&row, &w) + noise);
            x.push(row);
        }
        Dataset { x, y }
    }

    /// Gradient of the mean squared error at `w`.
    pub fn gradient(data: &Dataset, w: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; w.len()];
        let scale = 2.0 / data.y.len().max(1) as f64;
        for (row, y) in data.x.iter().zip(&data.y) {
            let residual = dot(row, w) - y;
            grad.iter_mut().zip(row).for_each(|(g, x)| *g += scale * residual * x);
        }
        grad
    }

    pub fn loss(data: &Dataset, w: &[f64]) -> f64 {
        let total: f64 = data.x.iter().zip(&data.y).map(|(row, y)| (dot(row, w) - y).powi(2)).sum();
        total / data.y.len().max(1) as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Trainer for LinearTrainer {
    fn dimension(&self) -> usize {
        self.features
    }

    fn train(&self, params: &[f64], client_seed: u64) -> Vec<f64> {
        let data = self.dataset(client_seed);
        let start: Vec<f64> = (0..self.features).map(|k| params.get(k).copied().unwrap_or(0.0)).collect();
        let mut w = start.clone();
        for _ in 0..self.epochs {
            let grad = Self::gradient(&data, &w);
            w.iter_mut().zip(&grad).for_each(|(w, g)| *w -= self.learning_rate * g);
        }
        w.iter()
            .zip(&start)
            .map(|(new, old)| (new - old).clamp(-self.bound, self.bound))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let spec = TrainerSpec::synthetic(50, 7);
        let a = local_train(&spec, &[], 3);
        assert_eq!(a, local_train(&spec, &[], 3));
        assert_ne!(a, local_train(&spec, &[], 4));
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_learning_rate_gives_zero_update() {
        let mut spec = TrainerSpec::linear(4, 1);
        spec.kind = TrainerKind::Linear {
            samples: 16,
            learning_rate: 0.0,
            epochs: 3,
        };
        assert!(local_train(&spec, &[0.5; 4], 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = TrainerSpec::linear(8, 2);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"linear\""));
        assert_eq!(serde_json::from_str::<TrainerSpec>(&json).unwrap(), spec);
    }
}
