//! Fully connected Q-network with ReLU hidden layers and a linear output.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `weights[i]` maps layer `i` (columns) to layer `i + 1` (rows).
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Gradient with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Transitions used for one gradient step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            weights.push(DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)));
            biases.push(DVector::from_fn(w[1], |_, _| rng.random_range(-bound..bound)));
        }
        Ok(Self { weights, biases })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            weights: sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect(),
            biases: sizes.windows(2).map(|w| DVector::zeros(w[1])).collect(),
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].ncols()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Activations of every layer, input first.
    fn activations(&self, input: &[f64]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut acts = vec![DVector::from_column_slice(input)];
        let mut pre = Vec::with_capacity(self.weights.len());
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = w * acts.last().expect("input layer") + b;
            let a = if i == last { z.clone() } else { z.map(relu) };
            pre.push(z);
            acts.push(a);
        }
        (acts, pre)
    }

    /// `Q(s, ·)`
    pub fn forward(&self, input: &[f64]) -> DVector<f64> {
        self.activations(input).0.pop().expect("output layer")
    }

    fn targets(&self, batch: &Batch, target: &Mlp, gamma: f64) -> Vec<f64> {
        (0..batch.len())
            .map(|i| batch.rewards[i] + gamma * target.forward(&batch.next_states[i]).max())
            .collect()
    }

    /// Batch-mean squared TD error against `y = r + γ max_a Q_target(s', a)`.
    pub fn loss(&self, batch: &Batch, target: &Mlp, gamma: f64) -> f64 {
        let y = self.targets(batch, target, gamma);
        let total: f64 = (0..batch.len())
            .map(|i| (y[i] - self.forward(&batch.states[i])[batch.actions[i]]).powi(2))
            .sum();
        total / batch.len().max(1) as f64
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_gradient(&self, batch: &Batch, target: &Mlp, gamma: f64) -> (f64, MlpGradient) {
        let y = self.targets(batch, target, gamma);
        let mut grad = MlpGradient {
            weights: self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: self.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        };
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut loss = 0.0;
        for i in 0..batch.len() {
            let (acts, pre) = self.activations(&batch.states[i]);
            let a = batch.actions[i];
            let q = acts.last().expect("output layer");
            let err = q[a] - y[i];
            loss += err * err;
            let mut delta = DVector::zeros(q.len());
            delta[a] = 2.0 * err * scale;
            for l in (0..self.weights.len()).rev() {
                grad.weights[l] += &delta * acts[l].transpose();
                grad.biases[l] += &delta;
                if l > 0 {
                    let back = self.weights[l].transpose() * &delta;
                    delta = back.zip_map(&pre[l - 1], |g, z| if z > 0.0 { g } else { 0.0 });
                }
            }
        }
        (loss * scale, grad)
    }

    pub fn apply_gradient(&mut self, grad: &MlpGradient, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= g * lr;
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            *b -= g * lr;
        }
    }

    /// One plain gradient-descent step `θ ← θ − lr ∇L(θ)`; returns the loss
    /// before the step.
    pub fn train_step(&mut self, batch: &Batch, target: &Mlp, lr: f64, gamma: f64) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(batch, target, gamma);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss became {loss}")));
        }
        self.apply_gradient(&grad, lr);
        if !self.is_finite() {
            return Err(Error::Divergence("parameters became non-finite".into()));
        }
        Ok(loss)
    }
}
