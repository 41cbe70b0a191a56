//! Mini-batch training shared by the scorer and the abstractor.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Matrix, Parameters, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub grad_clip_norm: f64,
    pub max_steps: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 24,
            max_len: 512,
            grad_clip_norm: 1.0,
            max_steps: 1000,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate may be zero (frozen run); everything else must be positive.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} must be positive")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.max_len == 0 {
            return bad("max_len");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm");
        }
        if self.max_steps == 0 {
            return bad("max_steps");
        }
        Ok(())
    }
}

pub trait HasParameters {
    fn parameters(&self) -> &Parameters;
    fn parameters_mut(&mut self) -> &mut Parameters;
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &Parameters) -> Self {
        let zeros = || params.iter().map(|(_, m)| Matrix::zeros(m.rows, m.cols)).collect();
        Self { kind, lr, step: 0, first: zeros(), second: zeros() }
    }

    pub fn apply(&mut self, params: &mut Parameters, grads: &Gradients) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.values_mut().zip(&grads.grads) {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - libm::pow(BETA1, self.step as f64);
                let c2 = 1.0 - libm::pow(BETA2, self.step as f64);
                for (((p, g), m), v) in params
                    .values_mut()
                    .zip(&grads.grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for i in 0..p.data.len() {
                        let d = g.data[i];
                        m.data[i] = BETA1 * m.data[i] + (1.0 - BETA1) * d;
                        v.data[i] = BETA2 * v.data[i] + (1.0 - BETA2) * d * d;
                        let mh = m.data[i] / c1;
                        let vh = v.data[i] / c2;
                        p.data[i] -= self.lr * mh / (libm::sqrt(vh) + ADAM_EPS);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    /// Global gradient norm per step, before clipping.
    pub grad_norms: Vec<f64>,
}

/// Runs `cfg.max_steps` steps of mini-batch training. Batches are drawn from
/// a seeded reshuffle of `examples` each epoch; each example builds its own
/// tape and the batch gradient is the mean of the example gradients.
pub fn train_loop<M, E>(
    model: &mut M,
    examples: &[E],
    cfg: &TrainConfig,
    loss_of: impl Fn(&M, &mut Tape<'_>, &E) -> Var,
) -> Result<TrainReport>
where
    M: HasParameters,
{
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.parameters());
    let mut report = TrainReport::default();

    for step in 0..cfg.max_steps {
        let mut grads = Gradients::zeros_like(model.parameters());
        let mut total = 0.0;
        let weight = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &examples[order[cursor]];
            cursor += 1;
            let mut tape = Tape::new(model.parameters());
            let loss = loss_of(model, &mut tape, ex);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { step, loss: value });
            }
            total += value;
            grads.accumulate(&tape.backward(loss), weight);
        }
        let mean = total * weight;
        let norm = clip_global_norm(&mut grads, cfg.grad_clip_norm);
        opt.apply(model.parameters_mut(), &grads);
        report.losses.push(mean);
        report.grad_norms.push(norm);
    }
    Ok(report)
}
