//! Fusion/scoring network and its training.
//!
//! ```text
//! h = W1 [e_sro; e_t] + b1        (k)
//! f = W2 relu(h) + b2             (scalar)
//! L = Σ_pos Σ_neg max(0, f(neg) - f(pos) + γ)
//! ```
//!
//! [`margin_loss_grad`] is the direct, per-example gradient. Training uses a factored
//! route (see `train`) that shares the text and time halves of `W1 x` across the
//! examples of a batch; both routes are checked against each other in tests.

mod adam;
mod checkpoint;
mod sampling;
mod train;

use rand::Rng;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, MANIFEST_NAME as CHECKPOINT_MANIFEST, PARAMS_NAME as CHECKPOINT_PARAMS};
pub use sampling::{category_eligible_years, NegativeSampler, NegativeSet, PointFact, PositiveSet};
pub use train::{initial_params, train, train_with_embeddings, TrainOutcome, TrainReport};
pub(crate) use train::{project_text, project_times};

use crate::error::{Error, Result};
use crate::exec::Execution;

pub const DEFAULT_HIDDEN: usize = 64;

/// Dimensions of the network: text embedding `d`, time embedding `d'`, hidden `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub text_dim: usize,
    pub time_dim: usize,
    pub hidden: usize,
}

impl Shape {
    pub fn input_dim(&self) -> usize {
        self.text_dim + self.time_dim
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.hidden * self.input_dim() + 2 * self.hidden + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn b1_offset(&self) -> usize {
        self.hidden * self.input_dim()
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden
    }
}

/// Network parameters in one flat buffer: `W1` (row-major, k × (d+d')), `b1`, `W2`, `b2`.
/// The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    shape: Shape,
    values: Vec<f64>,
}

impl ScorerParams {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn from_values(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Shape {
                what: "parameter buffer",
                expected: shape.len(),
                actual: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    /// `W1` and `W2` uniform in ±1/√fan_in, biases zero.
    pub fn init<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let b1 = (shape.input_dim() as f64).sqrt().recip();
        for w in p.w1_mut() {
            *w = rng.random_range(-b1..=b1);
        }
        let b2 = (shape.hidden as f64).sqrt().recip();
        for w in p.w2_mut() {
            *w = rng.random_range(-b2..=b2);
        }
        p
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn w1(&self) -> &[f64] {
        &self.values[..self.shape.b1_offset()]
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        let end = self.shape.b1_offset();
        &mut self.values[..end]
    }

    pub fn w1_row(&self, j: usize) -> &[f64] {
        let n = self.shape.input_dim();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn b1(&self) -> &[f64] {
        &self.values[self.shape.b1_offset()..self.shape.w2_offset()]
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        let (a, b) = (self.shape.b1_offset(), self.shape.w2_offset());
        &mut self.values[a..b]
    }

    pub fn w2(&self) -> &[f64] {
        &self.values[self.shape.w2_offset()..self.shape.b2_offset()]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let (a, b) = (self.shape.w2_offset(), self.shape.b2_offset());
        &mut self.values[a..b]
    }

    pub fn b2(&self) -> f64 {
        self.values[self.shape.b2_offset()]
    }

    pub fn set_b2(&mut self, v: f64) {
        let i = self.shape.b2_offset();
        self.values[i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &ScorerParams) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    fn check_input(&self, text: &[f64], time: &[f64]) -> Result<()> {
        if text.len() != self.shape.text_dim {
            return Err(Error::Shape {
                what: "triple embedding",
                expected: self.shape.text_dim,
                actual: text.len(),
            });
        }
        if time.len() != self.shape.time_dim {
            return Err(Error::Shape {
                what: "time embedding",
                expected: self.shape.time_dim,
                actual: time.len(),
            });
        }
        Ok(())
    }

    /// Pre-activation `W1 [text; time] + b1`.
    fn hidden_pre(&self, text: &[f64], time: &[f64]) -> Vec<f64> {
        let d = self.shape.text_dim;
        (0..self.shape.hidden)
            .map(|j| {
                let row = self.w1_row(j);
                dot(&row[..d], text) + dot(&row[d..], time) + self.b1()[j]
            })
            .collect()
    }

    fn output(&self, pre: &[f64]) -> f64 {
        pre.iter()
            .zip(self.w2())
            .map(|(&h, &w)| w * h.max(0.0))
            .sum::<f64>()
            + self.b2()
    }

    /// Plausibility score of a (triple embedding, time embedding) pair.
    pub fn score(&self, text: &[f64], time: &[f64]) -> Result<f64> {
        self.check_input(text, time)?;
        Ok(self.output(&self.hidden_pre(text, time)))
    }

    /// Adds `coeff * ∇f(text, time)` to `grads`. ReLU subgradient at 0 is 0.
    fn accumulate_score_grad(&self, text: &[f64], time: &[f64], coeff: f64, grads: &mut ScorerParams) {
        let pre = self.hidden_pre(text, time);
        let shape = self.shape;
        let d = shape.text_dim;
        let n = shape.input_dim();
        for (j, &h) in pre.iter().enumerate() {
            let active = h > 0.0;
            grads.w2_mut()[j] += coeff * h.max(0.0);
            if active {
                let dh = coeff * self.w2()[j];
                grads.b1_mut()[j] += dh;
                let row = &mut grads.w1_mut()[j * n..(j + 1) * n];
                axpy(dh, text, &mut row[..d]);
                axpy(dh, time, &mut row[d..]);
            }
        }
        let b2 = grads.b2() + coeff;
        grads.set_b2(b2);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// One scored input: a triple embedding with a time embedding.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub text: &'a [f64],
    pub time: &'a [f64],
}

/// Margin ranking loss of one positive against its negatives.
pub fn margin_loss(
    params: &ScorerParams,
    positive: Example<'_>,
    negatives: &[Example<'_>],
    margin: f64,
) -> Result<f64> {
    let fp = params.score(positive.text, positive.time)?;
    let mut loss = 0.0;
    for n in negatives {
        loss += (params.score(n.text, n.time)? - fp + margin).max(0.0);
    }
    Ok(loss)
}

/// Loss and gradient of [`margin_loss`], computed example by example.
pub fn margin_loss_grad(
    params: &ScorerParams,
    positive: Example<'_>,
    negatives: &[Example<'_>],
    margin: f64,
) -> Result<(f64, ScorerParams)> {
    let fp = params.score(positive.text, positive.time)?;
    let mut grads = ScorerParams::zeros(params.shape());
    let mut loss = 0.0;
    let mut active = 0usize;
    for n in negatives {
        let slack = params.score(n.text, n.time)? - fp + margin;
        if slack > 0.0 {
            loss += slack;
            active += 1;
            params.accumulate_score_grad(n.text, n.time, 1.0, &mut grads);
        }
    }
    if active > 0 {
        params.accumulate_score_grad(positive.text, positive.time, -(active as f64), &mut grads);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeKind {
    EntityCorrupted,
    #[default]
    TimeCorrupted,
}

impl NegativeKind {
    pub fn name(self) -> &'static str {
        match self {
            NegativeKind::EntityCorrupted => "entity",
            NegativeKind::TimeCorrupted => "time",
        }
    }
}

impl std::str::FromStr for NegativeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entity" | "entity-corrupted" => Ok(NegativeKind::EntityCorrupted),
            "time" | "time-corrupted" => Ok(NegativeKind::TimeCorrupted),
            other => Err(Error::Config(format!(
                "unknown negative type `{other}` (use entity or time)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Margin γ of the ranking loss.
    pub margin: f64,
    pub negatives: usize,
    pub negative_kind: NegativeKind,
    /// Positives per mini-batch.
    pub batch_size: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 50,
            margin: 2.0,
            negatives: 128,
            negative_kind: NegativeKind::TimeCorrupted,
            batch_size: 512,
            hidden: DEFAULT_HIDDEN,
            time_dim: crate::time::DEFAULT_TIME_DIM,
            adam: AdamConfig::default(),
            seed: 42,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.margin.is_nan() || self.margin <= 0.0 {
            return fail("margin must be positive");
        }
        if self.negatives == 0 {
            return fail("at least one negative per positive is required");
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return fail("learning rate must be positive");
        }
        if self.hidden == 0 {
            return fail("hidden dimension must be positive");
        }
        if self.time_dim == 0 || !self.time_dim.is_multiple_of(2) {
            return fail("time dimension must be even and positive");
        }
        self.adam.validate()
    }
}
