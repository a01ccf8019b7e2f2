use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::MlpModel;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::scenario::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// mean squared error on ν
    MseNu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// epochs without a new best validation loss before stopping
    pub patience: usize,
    /// held out of the training split; 0 validates on the training rows
    pub validation_fraction: f64,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.05,
            loss: Loss::MseNu,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size >= 1
            && self.max_epochs >= 1
            && (0.0..1.0).contains(&self.validation_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// weights of the best validation epoch
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_val_loss(&self) -> f64 {
        self.history
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Trains on the dataset's training split with targets `ν = ηβ`.
pub fn train(model: MlpModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if model.feature_stats() != &dataset.feature_stats {
        return Err(Error::InvalidConfig(
            "model feature statistics differ from the dataset's".into(),
        ));
    }
    let stats = &dataset.feature_stats;
    let mut inputs = Vec::with_capacity(dataset.num_train);
    let mut targets = Vec::with_capacity(dataset.num_train);
    for s in dataset.train() {
        inputs.push(stats.standardize_db(&s.beta.to_db())?);
        targets.push(s.eta.fractions(&s.beta)?);
    }
    train_on(model, &inputs, &targets, cfg)
}

struct Adam {
    m_w: Vec<DMatrix<f64>>,
    v_w: Vec<DMatrix<f64>>,
    m_b: Vec<DVector<f64>>,
    v_b: Vec<DVector<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let shapes = model.layers().iter();
        Self {
            m_w: shapes.clone().map(|l| l.weights.map(|_| 0.0)).collect(),
            v_w: shapes.clone().map(|l| l.weights.map(|_| 0.0)).collect(),
            m_b: shapes.clone().map(|l| l.bias.map(|_| 0.0)).collect(),
            v_b: shapes.map(|l| l.bias.map(|_| 0.0)).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: super::ParamGrads, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        let lr = cfg.learning_rate;
        let upd = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        };
        for (i, layer) in model.layers_mut().iter_mut().enumerate() {
            for (((p, g), m), v) in layer
                .weights
                .iter_mut()
                .zip(grads.weights[i].iter())
                .zip(self.m_w[i].iter_mut())
                .zip(self.v_w[i].iter_mut())
            {
                upd(p, *g, m, v);
            }
            for (((p, g), m), v) in layer
                .bias
                .iter_mut()
                .zip(grads.bias[i].iter())
                .zip(self.m_b[i].iter_mut())
                .zip(self.v_b[i].iter_mut())
            {
                upd(p, *g, m, v);
            }
        }
    }
}

fn gather(rows: &[Vec<f64>], idx: &[usize]) -> DMatrix<f64> {
    let d = rows[idx[0]].len();
    DMatrix::from_fn(d, idx.len(), |r, c| rows[idx[c]][r])
}

fn mse(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>], idx: &[usize]) -> f64 {
    let mut total = 0.0;
    for chunk in idx.chunks(1024) {
        let y = model.forward_batch(&gather(inputs, chunk));
        let t = gather(targets, chunk);
        total += (y - t).norm_squared();
    }
    total / (idx.len() * model.output_dim()) as f64
}

/// Trains on explicit standardized inputs and ν targets.
pub fn train_on(
    mut model: MlpModel,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptySamples);
    }
    if inputs.len() != targets.len() {
        return Err(crate::error::shape_mismatch(inputs.len(), targets.len()));
    }
    for (x, t) in inputs.iter().zip(targets) {
        if x.len() != model.input_dim() {
            return Err(crate::error::shape_mismatch(model.input_dim(), x.len()));
        }
        if t.len() != model.output_dim() {
            return Err(crate::error::shape_mismatch(model.output_dim(), t.len()));
        }
    }

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut stream(cfg.seed, Domain::Split, 0));
    let n_val = (cfg.validation_fraction * inputs.len() as f64).round() as usize;
    let (val_idx, mut train_idx) = if n_val == 0 || n_val >= inputs.len() {
        (order.clone(), order)
    } else {
        let (v, t) = order.split_at(n_val);
        (v.to_vec(), t.to_vec())
    };
    train_idx.sort_unstable();

    let scale = 2.0 / model.output_dim() as f64;
    let mut adam = Adam::new(&model);
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        train_idx.shuffle(&mut stream(cfg.seed, Domain::Shuffle, epoch as u64));
        let mut sum = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let x = gather(inputs, batch);
            let t = gather(targets, batch);
            let trace = model.trace(&x);
            let mut dy = trace.post.last().expect("output layer") - t;
            sum += dy.norm_squared();
            dy *= scale / batch.len() as f64;
            let (_, grads) = model.backward(&trace, dy, true);
            adam.update(&mut model, grads.expect("requested"), cfg);
        }
        let train_loss = sum / (train_idx.len() * model.output_dim()) as f64;
        let val_loss = mse(&model, inputs, targets, &val_idx);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best.clone_from(&model);
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureStats;
    use crate::nn::Activation;
    use rand::Rng;

    fn toy(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = stream(seed, Domain::Scenario, 0);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ts = xs
            .iter()
            .map(|x| x.iter().map(|v| 0.5 + 0.3 * (2.0 * v).sin()).collect())
            .collect();
        (xs, ts)
    }

    fn model(d: usize, seed: u64) -> MlpModel {
        let stats = FeatureStats {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        };
        MlpModel::new(&[d, 32, d], Activation::Silu, Activation::Sigmoid, stats, seed).unwrap()
    }

    #[test]
    fn memorizes_ten_samples() {
        let (xs, ts) = toy(10, 3, 1);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 10,
            max_epochs: 3000,
            patience: 3000,
            validation_fraction: 0.0,
            ..Default::default()
        };
        let out = train_on(model(3, 2), &xs, &ts, &cfg).unwrap();
        assert!(out.best_val_loss() < 1e-4, "{}", out.best_val_loss());
    }

    #[test]
    fn fixed_seed_gives_identical_weights() {
        let (xs, ts) = toy(200, 4, 3);
        let cfg = TrainConfig {
            batch_size: 32,
            max_epochs: 5,
            ..Default::default()
        };
        let a = train_on(model(4, 5), &xs, &ts, &cfg).unwrap();
        let b = train_on(model(4, 5), &xs, &ts, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn divergence_is_reported() {
        let (xs, mut ts) = toy(20, 2, 4);
        ts[3][1] = f64::NAN;
        let cfg = TrainConfig {
            max_epochs: 2,
            ..Default::default()
        };
        assert!(matches!(
            train_on(model(2, 1), &xs, &ts, &cfg),
            Err(Error::DivergedLoss { epoch: 0 })
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let (xs, ts) = toy(5, 2, 4);
        let cfg = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(train_on(model(2, 1), &xs, &ts, &cfg).is_err());
    }
}
