//! Fully connected regression networks mapping standardized dB fading
//! features to power fractions `ν = ηβ`.

mod io;
mod objective;
mod train;

pub use objective::{
    input_gradient, input_gradients, predict_allocation, sum_se_with_gradient, GradientRequest,
    Objective,
};
pub use train::{train, train_on, EpochStats, Loss, TrainConfig, TrainOutcome};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{shape_mismatch, Error, Result};
use crate::features::FeatureStats;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    /// `x·σ(x)`
    Silu,
    /// `ln(1 + eˣ)`
    Softplus,
    /// `1 / (1 + e⁻ˣ)`
    Sigmoid,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Silu => x * logistic(x),
            Self::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Self::Sigmoid => logistic(x),
        }
    }

    /// Derivative at the pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::Silu => {
                let s = logistic(x);
                s * (1.0 + x * (1.0 - s))
            }
            Self::Softplus => logistic(x),
            Self::Sigmoid => {
                let s = logistic(x);
                s * (1.0 - s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    widths: Vec<usize>,
    layers: Vec<Layer>,
    hidden: Activation,
    output: Activation,
    feature_stats: FeatureStats,
}

/// Pre-activations and activations of a batch, one column per sample.
pub(crate) struct Trace {
    pub pre: Vec<DMatrix<f64>>,
    pub post: Vec<DMatrix<f64>>,
}

/// Gradients of a scalar with respect to every layer's parameters.
pub(crate) struct ParamGrads {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl MlpModel {
    /// He-normal weights and zero biases drawn from the `Init` stream of `seed`.
    pub fn new(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        feature_stats: FeatureStats,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeroed(widths, hidden, output, feature_stats)?;
        let mut rng = stream(seed, Domain::Init, 0);
        for layer in &mut model.layers {
            let fan_in = layer.weights.ncols() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            // row-major fill keeps the draw order independent of storage layout
            let (rows, cols) = layer.weights.shape();
            for r in 0..rows {
                for c in 0..cols {
                    layer.weights[(r, c)] = normal.sample(&mut rng);
                }
            }
        }
        Ok(model)
    }

    pub fn zeroed(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        feature_stats: FeatureStats,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer widths must have at least two positive entries, got {widths:?}"
            )));
        }
        if feature_stats.len() != widths[0] {
            return Err(shape_mismatch(widths[0], feature_stats.len()));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weights: DMatrix::zeros(w[1], w[0]),
                bias: DVector::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            hidden,
            output,
            feature_stats,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn feature_stats(&self) -> &FeatureStats {
        &self.feature_stats
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// ν for one standardized input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(shape_mismatch(self.input_dim(), x.len()));
        }
        let out = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x));
        Ok(out.as_slice().to_vec())
    }

    /// Forward pass on a batch stored one sample per column.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            a = self.affine(layer, &a);
            a.apply(|v| *v = act.apply(*v));
        }
        a
    }

    fn affine(&self, layer: &Layer, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.weights * a;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        z
    }

    pub(crate) fn trace(&self, x: &DMatrix<f64>) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let z = self.affine(layer, post.last().expect("input pushed"));
            post.push(z.map(|v| act.apply(v)));
            pre.push(z);
        }
        Trace { pre, post }
    }

    /// Reverse pass of `dy` (output gradient, one column per sample). Returns
    /// the input gradient and, if requested, the parameter gradients summed
    /// over the batch.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        dy: DMatrix<f64>,
        want_params: bool,
    ) -> (DMatrix<f64>, Option<ParamGrads>) {
        let n = self.layers.len();
        let mut grads = want_params.then(|| ParamGrads {
            weights: Vec::with_capacity(n),
            bias: Vec::with_capacity(n),
        });
        let mut delta = dy;
        for i in (0..n).rev() {
            let act = self.activation(i);
            delta.zip_apply(&trace.pre[i], |d, z| *d *= act.derivative(z));
            if let Some(g) = grads.as_mut() {
                g.weights.push(&delta * trace.post[i].transpose());
                g.bias.push(delta.column_sum());
            }
            delta = self.layers[i].weights.tr_mul(&delta);
        }
        if let Some(g) = grads.as_mut() {
            g.weights.reverse();
            g.bias.reverse();
        }
        (delta, grads)
    }

    /// Vector-Jacobian product `(∂ν/∂x)ᵀ dy` at one standardized input.
    pub fn input_vjp(&self, x: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(shape_mismatch(self.input_dim(), x.len()));
        }
        if dy.len() != self.output_dim() {
            return Err(shape_mismatch(self.output_dim(), dy.len()));
        }
        let trace = self.trace(&DMatrix::from_column_slice(x.len(), 1, x));
        let (dx, _) = self.backward(
            &trace,
            DMatrix::from_column_slice(dy.len(), 1, dy),
            false,
        );
        Ok(dx.as_slice().to_vec())
    }

    /// SHA-256 over architecture tags and every parameter, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.widths {
            h.update((*w as u64).to_le_bytes());
        }
        h.update(format!("{:?}/{:?}", self.hidden, self.output).as_bytes());
        for v in self.parameters() {
            h.update(v.to_le_bytes());
        }
        for v in self.feature_stats.mean.iter().chain(&self.feature_stats.std) {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parameters in file order: per layer, weights row-major then bias.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| {
            let (rows, cols) = l.weights.shape();
            (0..rows)
                .flat_map(move |r| (0..cols).map(move |c| l.weights[(r, c)]))
                .chain(l.bias.iter().copied())
        })
    }
}
