//! Triple classification: a one-hidden-layer perceptron over triple embeddings.
//!
//! The classifier follows the usual library defaults for such models: ReLU hidden
//! layer, logistic output, Glorot-uniform initialisation, Adam, mini-batches of
//! `min(200, n)`, L2 penalty `alpha/2 · ‖W‖² / batch`, and stopping once the epoch
//! loss has failed to improve by `tol` for more than `n_iter_no_change` epochs.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, EntityId, Triple};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::scorer::{Adam, AdamConfig};
use crate::text::{TextEncoder, TripleEmbeddings, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            alpha: 0.05,
            learning_rate: 0.001,
            max_iter: 1000,
            batch_size: 200,
            tol: 1e-4,
            n_iter_no_change: 10,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub epochs: usize,
    pub final_loss: f64,
    /// False when `max_iter` was reached before the loss settled.
    pub converged: bool,
}

/// Layout of `params`: `W1` (hidden × input, row-major), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Mlp {
    fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = vec![0.0; hidden * input + 2 * hidden + 1];
        let b1 = (6.0 / (input + hidden) as f64).sqrt();
        let b2 = (2.0 / (hidden + 1) as f64).sqrt();
        let (w1, rest) = params.split_at_mut(hidden * input);
        let (bias1, rest) = rest.split_at_mut(hidden);
        let (w2, bias2) = rest.split_at_mut(hidden);
        for v in w1.iter_mut().chain(bias1.iter_mut()) {
            *v = rng.random_range(-b1..b1);
        }
        for v in w2.iter_mut().chain(bias2.iter_mut()) {
            *v = rng.random_range(-b2..b2);
        }
        Self {
            input,
            hidden,
            params,
        }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (w1, rest) = self.params.split_at(self.hidden * self.input);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden);
        (w1, b1, w2, b2[0])
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let (w1, b1, w2, b2) = self.split();
        let mut z = b2;
        for j in 0..self.hidden {
            let row = &w1[j * self.input..(j + 1) * self.input];
            let h = (row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b1[j]).max(0.0);
            hidden[j] = h;
            z += w2[j] * h;
        }
        z
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        sigmoid(self.forward(x, &mut h))
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.predict_proba(x) >= 0.5
    }

    /// Loss and gradient of one mini-batch.
    fn batch_grad(&self, xs: &[&[f64]], ys: &[bool], alpha: f64, grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let n = xs.len() as f64;
        let (k, d) = (self.hidden, self.input);
        let (_, _, w2, _) = self.split();
        let w2 = w2.to_vec();
        let mut h = vec![0.0; k];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z = self.forward(x, &mut h);
            let t = if y { 1.0 } else { 0.0 };
            loss += softplus(z) - t * z;
            let delta = (sigmoid(z) - t) / n;
            let (gw1, rest) = grad.split_at_mut(k * d);
            let (gb1, rest) = rest.split_at_mut(k);
            let (gw2, gb2) = rest.split_at_mut(k);
            gb2[0] += delta;
            for j in 0..k {
                gw2[j] += delta * h[j];
                if h[j] > 0.0 {
                    let dh = delta * w2[j];
                    gb1[j] += dh;
                    for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                        *g += dh * xi;
                    }
                }
            }
        }
        let mut penalty = 0.0;
        let (w1, _, w2p, _) = self.split();
        for (i, w) in w1.iter().enumerate() {
            penalty += w * w;
            grad[i] += alpha * w / n;
        }
        for (j, w) in w2p.iter().enumerate() {
            penalty += w * w;
            grad[k * d + k + j] += alpha * w / n;
        }
        loss / n + 0.5 * alpha * penalty / n
    }

    pub fn fit(xs: &[Vec<f64>], ys: &[bool], config: &ClassifierConfig) -> Result<(Self, FitReport)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Config(format!(
                "classifier needs matching, non-empty inputs ({} examples, {} labels)",
                xs.len(),
                ys.len()
            )));
        }
        let input = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != input) {
            return Err(Error::Shape {
                what: "classifier input",
                expected: input,
                actual: bad.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Mlp::new(input, config.hidden, &mut rng);
        let mut adam = Adam::new(model.params.len(), config.learning_rate, AdamConfig::default());
        let batch = config.batch_size.clamp(1, xs.len());
        let mut grad = vec![0.0; model.params.len()];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        let mut report = FitReport {
            epochs: 0,
            final_loss: f64::NAN,
            converged: false,
        };
        for epoch in 0..config.max_iter {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for (batch_no, idx) in order.chunks(batch).enumerate() {
                let bx: Vec<&[f64]> = idx.iter().map(|&i| xs[i].as_slice()).collect();
                let by: Vec<bool> = idx.iter().map(|&i| ys[i]).collect();
                let l = model.batch_grad(&bx, &by, config.alpha, &mut grad);
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: epoch + 1,
                        batch: batch_no + 1,
                    });
                }
                total += l * idx.len() as f64;
                adam.update(&mut model.params, &grad);
            }
            let loss = total / xs.len() as f64;
            report.epochs = epoch + 1;
            report.final_loss = loss;
            if loss > best - config.tol {
                stale += 1;
            } else {
                stale = 0;
            }
            best = best.min(loss);
            if stale > config.n_iter_no_change {
                report.converged = true;
                break;
            }
        }
        Ok((model, report))
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[bool]) -> f64 {
        let right = xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) == y).count();
        right as f64 / xs.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationOutcome {
    pub accuracy: f64,
    pub train_examples: usize,
    pub test_examples: usize,
    /// Test triples dropped because they also occur in train or valid.
    pub leaked_removed: usize,
    pub fit: FitReport,
}

/// One head-or-tail corruption of `t` outside `forbidden`.
fn corrupt<R: Rng>(
    t: Triple,
    num_entities: usize,
    forbidden: &HashSet<Triple>,
    taken: &mut HashSet<Triple>,
    rng: &mut R,
) -> Result<Triple> {
    for _ in 0..100 {
        let e = EntityId(rng.random_range(0..num_entities) as u32);
        let mut c = t;
        if rng.random_bool(0.5) {
            c.subject = e;
        } else {
            c.object = e;
        }
        if !forbidden.contains(&c) && taken.insert(c) {
            return Ok(c);
        }
    }
    Err(Error::Sampling(format!(
        "no corruption of {t:?} outside the known triples after 100 draws"
    )))
}

/// Labelled triples for the classification protocol: every positive is followed by
/// one corruption of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSets {
    pub train: Vec<(Triple, bool)>,
    pub test: Vec<(Triple, bool)>,
    /// Test triples dropped because they also occur in train or valid.
    pub leaked_removed: usize,
}

impl ClassificationSets {
    /// Every triple that needs an embedding, in set order.
    pub fn triples(&self) -> Vec<Triple> {
        self.train.iter().chain(&self.test).map(|(t, _)| *t).collect()
    }
}

/// Builds the balanced train/test sets. Train negatives avoid train triples; test
/// negatives avoid every known triple. Deterministic in `seed`.
pub fn classification_sets(ds: &Dataset, seed: u64) -> Result<ClassificationSets> {
    let dedup = |qs: &[crate::data::Quadruple]| {
        let mut seen = HashSet::new();
        qs.iter()
            .map(|q| q.triple())
            .filter(|t| seen.insert(*t))
            .collect::<Vec<_>>()
    };
    let train = dedup(&ds.train);
    let train_set: HashSet<Triple> = train.iter().copied().collect();
    let seen: HashSet<Triple> = ds.train.iter().chain(&ds.valid).map(|q| q.triple()).collect();
    let all: HashSet<Triple> = ds.all_quadruples().map(|q| q.triple()).collect();
    let test_raw = dedup(&ds.test);
    let test: Vec<Triple> = test_raw.iter().copied().filter(|t| !seen.contains(t)).collect();
    let leaked_removed = test_raw.len() - test.len();
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyEvaluation);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = HashSet::new();
    let n = ds.num_entities();
    let mut labelled = |pos: &[Triple], forbidden: &HashSet<Triple>| -> Result<Vec<(Triple, bool)>> {
        let mut out = Vec::with_capacity(2 * pos.len());
        for &t in pos {
            out.push((t, true));
            out.push((corrupt(t, n, forbidden, &mut taken, &mut rng)?, false));
        }
        Ok(out)
    };
    Ok(ClassificationSets {
        train: labelled(&train, &train_set)?,
        test: labelled(&test, &all)?,
        leaked_removed,
    })
}

/// Builds the labelled sets, embeds them, fits the classifier and reports test accuracy.
pub fn triple_classification(
    ds: &Dataset,
    embeddings: &mut TripleEmbeddings,
    encoder: &dyn TextEncoder,
    variant: Variant,
    config: &ClassifierConfig,
    exec: Execution,
) -> Result<ClassificationOutcome> {
    let sets = classification_sets(ds, config.seed)?;
    embeddings.ensure(&sets.triples(), ds, encoder, variant, exec)?;
    let to_xy = |set: &[(Triple, bool)]| -> (Vec<Vec<f64>>, Vec<bool>) {
        set.iter()
            .map(|(t, y)| (embeddings.get(t).expect("ensured").to_vec(), *y))
            .unzip()
    };
    let (train_x, train_y) = to_xy(&sets.train);
    let (test_x, test_y) = to_xy(&sets.test);
    let (model, fit) = Mlp::fit(&train_x, &train_y, config)?;
    Ok(ClassificationOutcome {
        accuracy: model.accuracy(&test_x, &test_y),
        train_examples: train_x.len(),
        test_examples: test_x.len(),
        leaked_removed: sets.leaked_removed,
        fit,
    })
}
