//! Mini-batch Adam on the margin ranking loss.
//!
//! `W1 x` splits into a text half and a time half. Within a batch the text half is
//! computed once per distinct triple and the time half once per year, and the `W1`
//! gradient is accumulated per distinct text and per year before the outer products
//! are formed. Batches are cut into fixed-size chunks whose partial gradients are
//! summed in chunk order, so results do not depend on the thread count.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{axpy, dot, Adam, NegativeKind, NegativeSampler, PointFact, ScorerParams, Shape, TrainConfig};
use crate::data::{expand_training_points, Dataset, TrainingPoint, Triple};
use crate::error::{Error, Result};
use crate::text::{TextEncoder, TripleEmbeddings, Variant};
use crate::time::{TimeEmbedding, TimeEncoder};

/// Positives per parallel work unit.
const GROUP_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Summed loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub training_points: usize,
    pub batches_per_epoch: usize,
    pub optimizer_steps: u64,
    /// Positives dropped because no valid negative could be drawn, over all epochs.
    pub skipped_positives: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    pub report: TrainReport,
}

/// The parameters training starts from for a given seed.
pub fn initial_params(shape: Shape, seed: u64) -> ScorerParams {
    ScorerParams::init(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn train(
    ds: &Dataset,
    encoder: &dyn TextEncoder,
    variant: Variant,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut embeddings = TripleEmbeddings::new();
    train_with_embeddings(ds, &mut embeddings, encoder, variant, config)
}

/// Like [`train`], reusing (and extending) an embedding cache.
pub fn train_with_embeddings(
    ds: &Dataset,
    embeddings: &mut TripleEmbeddings,
    encoder: &dyn TextEncoder,
    variant: Variant,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let exec = config.execution;
    let points = expand_training_points(&ds.train);
    let train_triples: Vec<Triple> = ds.train.iter().map(|q| q.triple()).collect();
    embeddings.ensure(&train_triples, ds, encoder, variant, exec)?;

    let shape = Shape {
        text_dim: encoder.dim(),
        time_dim: config.time_dim,
        hidden: config.hidden,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ScorerParams::init(shape, &mut rng);
    let time_embs = TimeEncoder::for_range(&ds.range, config.time_dim)?.encode_range(&ds.range);
    let sampler = NegativeSampler::new(ds);
    let mut adam = Adam::new(shape.len(), config.learning_rate, config.adam);

    let batches_per_epoch = points.len().div_ceil(config.batch_size);
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        training_points: points.len(),
        batches_per_epoch,
        optimizer_steps: 0,
        skipped_positives: 0,
        notes: vec![
            format!(
                "init: W1, W2 ~ U(±1/sqrt(fan_in)), biases 0; batch size {} positives",
                config.batch_size
            ),
            format!(
                "negatives: {} x {}",
                config.negatives,
                config.negative_kind.name()
            ),
        ],
    };

    let mut order: Vec<usize> = (0..points.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let batch_points: Vec<TrainingPoint> = batch.iter().map(|&i| points[i]).collect();
            let (groups, skipped) = build_groups(
                ds,
                &batch_points,
                &sampler,
                embeddings,
                encoder,
                variant,
                config,
                &mut rng,
            )?;
            report.skipped_positives += skipped;
            if groups.is_empty() {
                continue;
            }
            let time_proj = project_times(&params, &time_embs);
            let partials = exec.map_chunks(&groups, GROUP_CHUNK, |chunk| {
                let mut grads = ScorerParams::zeros(shape);
                let mut dtime = vec![0.0; time_embs.len() * shape.hidden];
                let mut loss = 0.0;
                for g in chunk {
                    loss += group_loss_grad(
                        &params,
                        embeddings,
                        &time_proj,
                        g,
                        config.margin,
                        &mut grads,
                        &mut dtime,
                    );
                }
                fold_time_grad(&mut grads, &dtime, &time_embs);
                (loss, grads)
            });
            let mut grads = ScorerParams::zeros(shape);
            let mut loss = 0.0;
            for (l, g) in &partials {
                loss += l;
                grads.add_assign(g);
            }
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                });
            }
            adam.update(params.values_mut(), grads.values());
            epoch_loss += loss;
        }
        log::info!("epoch {}/{}: loss {epoch_loss:.4}", epoch + 1, config.epochs);
        report.epoch_losses.push(epoch_loss);
    }
    if report.skipped_positives > 0 {
        report.notes.push(format!(
            "{} positive draws skipped: no eligible negative",
            report.skipped_positives
        ));
    }
    report.optimizer_steps = adam.steps();
    Ok(TrainOutcome { params, report })
}

/// One positive and its negatives: `(embedding slot, year offset)`, positive first.
#[derive(Debug, Clone)]
pub(crate) struct Group {
    pub(crate) items: Vec<(usize, usize)>,
}

#[allow(clippy::too_many_arguments)]
fn build_groups(
    ds: &Dataset,
    batch: &[TrainingPoint],
    sampler: &NegativeSampler,
    embeddings: &mut TripleEmbeddings,
    encoder: &dyn TextEncoder,
    variant: Variant,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Group>, usize)> {
    let mut skipped = 0;
    let mut drawn: Vec<(PointFact, Vec<PointFact>)> = Vec::with_capacity(batch.len());
    for p in batch {
        let quad = &ds.train[p.quad];
        let positive = PointFact {
            triple: quad.triple(),
            year: p.year,
        };
        let negatives = match config.negative_kind {
            NegativeKind::TimeCorrupted => sampler.time_corrupted(quad, config.negatives, rng),
            NegativeKind::EntityCorrupted => sampler.entity_corrupted(positive, config.negatives, rng),
        };
        match negatives {
            Ok(n) => drawn.push((positive, n.0)),
            Err(Error::Sampling(msg)) => {
                log::debug!("skipping positive: {msg}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if config.negative_kind == NegativeKind::EntityCorrupted {
        let needed: Vec<Triple> = drawn
            .iter()
            .flat_map(|(_, negs)| negs.iter().map(|n| n.triple))
            .collect();
        embeddings.ensure(&needed, ds, encoder, variant, config.execution)?;
    }
    let slot_of = |pf: &PointFact| -> (usize, usize) {
        let slot = embeddings.slot(&pf.triple).expect("embedding ensured above");
        (slot, ds.range.offset(pf.year))
    };
    let groups = drawn
        .iter()
        .map(|(pos, negs)| Group {
            items: std::iter::once(pos).chain(negs).map(slot_of).collect(),
        })
        .collect();
    Ok((groups, skipped))
}

/// `W1_time e_t` for every year, row-major by year offset.
pub(crate) fn project_times(params: &ScorerParams, times: &[TimeEmbedding]) -> Vec<f64> {
    let shape = params.shape();
    let d = shape.text_dim;
    let mut out = Vec::with_capacity(times.len() * shape.hidden);
    for t in times {
        for j in 0..shape.hidden {
            out.push(dot(&params.w1_row(j)[d..], t.as_slice()));
        }
    }
    out
}

/// `W1_text e + b1`.
pub(crate) fn project_text(params: &ScorerParams, text: &[f64]) -> Vec<f64> {
    let d = params.shape().text_dim;
    (0..params.shape().hidden)
        .map(|j| dot(&params.w1_row(j)[..d], text) + params.b1()[j])
        .collect()
}

struct TextSlot {
    slot: usize,
    proj: Vec<f64>,
    grad: Vec<f64>,
}

/// Adds the group's loss gradient into `grads` (except the `W1` time half, which goes
/// to `dtime` per year) and returns the group's loss.
pub(crate) fn group_loss_grad(
    params: &ScorerParams,
    embeddings: &TripleEmbeddings,
    time_proj: &[f64],
    group: &Group,
    margin: f64,
    grads: &mut ScorerParams,
    dtime: &mut [f64],
) -> f64 {
    let k = params.shape().hidden;
    let mut texts: Vec<TextSlot> = Vec::new();
    let mut local: HashMap<usize, usize> = HashMap::new();
    let resolved: Vec<(usize, usize)> = group
        .items
        .iter()
        .map(|&(slot, year)| {
            let idx = *local.entry(slot).or_insert_with(|| {
                texts.push(TextSlot {
                    slot,
                    proj: project_text(params, embeddings.by_slot(slot)),
                    grad: vec![0.0; k],
                });
                texts.len() - 1
            });
            (idx, year)
        })
        .collect();

    let pre = |(t, y): (usize, usize)| -> Vec<f64> {
        texts[t]
            .proj
            .iter()
            .zip(&time_proj[y * k..(y + 1) * k])
            .map(|(a, b)| a + b)
            .collect()
    };
    let out = |h: &[f64]| -> f64 {
        h.iter()
            .zip(params.w2())
            .map(|(&h, &w)| w * h.max(0.0))
            .sum::<f64>()
            + params.b2()
    };

    let pos_pre = pre(resolved[0]);
    let fp = out(&pos_pre);
    let mut loss = 0.0;
    let mut active: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, &item) in resolved.iter().enumerate().skip(1) {
        let h = pre(item);
        let slack = out(&h) - fp + margin;
        if !slack.is_finite() {
            loss += slack;
        } else if slack > 0.0 {
            loss += slack;
            active.push((i, h));
        }
    }
    if active.is_empty() {
        return loss;
    }

    let w2: Vec<f64> = params.w2().to_vec();
    let mut backward = |(t, y): (usize, usize), h: &[f64], coeff: f64, grads: &mut ScorerParams| {
        for j in 0..k {
            grads.w2_mut()[j] += coeff * h[j].max(0.0);
            if h[j] > 0.0 {
                let dh = coeff * w2[j];
                grads.b1_mut()[j] += dh;
                texts[t].grad[j] += dh;
                dtime[y * k + j] += dh;
            }
        }
        let b2 = grads.b2() + coeff;
        grads.set_b2(b2);
    };
    let count = active.len() as f64;
    for (i, h) in &active {
        backward(resolved[*i], h, 1.0, grads);
    }
    backward(resolved[0], &pos_pre, -count, grads);

    let n = params.shape().input_dim();
    let d = params.shape().text_dim;
    let w1 = grads.w1_mut();
    for t in &texts {
        let e = embeddings.by_slot(t.slot);
        for (j, &g) in t.grad.iter().enumerate() {
            if g != 0.0 {
                axpy(g, e, &mut w1[j * n..j * n + d]);
            }
        }
    }
    loss
}

pub(crate) fn fold_time_grad(grads: &mut ScorerParams, dtime: &[f64], times: &[TimeEmbedding]) {
    let shape = grads.shape();
    let (k, n, d) = (shape.hidden, shape.input_dim(), shape.text_dim);
    let w1 = grads.w1_mut();
    for (y, t) in times.iter().enumerate() {
        for j in 0..k {
            let g = dtime[y * k + j];
            if g != 0.0 {
                axpy(g, t.as_slice(), &mut w1[j * n + d..(j + 1) * n]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EntityId, RelationId};
    use crate::scorer::{margin_loss_grad, Example};
    use crate::synth::{planted_era_graph, EraGraphConfig};
    use crate::text::{HashingEncoder, TripleEmbedding};
    use crate::Execution;
    use rand::Rng;

    fn triple(i: u32) -> Triple {
        Triple {
            subject: EntityId(i),
            relation: RelationId(0),
            object: EntityId(i + 1),
        }
    }

    #[test]
    fn factored_gradient_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shape = Shape {
            text_dim: 10,
            time_dim: 6,
            hidden: 8,
        };
        let times: Vec<TimeEmbedding> = TimeEncoder::new(0, 6)
            .unwrap()
            .encode_range(&crate::data::TimeRange::new(0, 11).unwrap());
        for trial in 0..20 {
            let mut params = ScorerParams::init(shape, &mut rng);
            for b in params.b1_mut() {
                *b = rng.random_range(-0.3..0.3);
            }
            let mut store = TripleEmbeddings::new();
            for i in 0..4 {
                let v = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
                store.insert(triple(i), TripleEmbedding(v));
            }
            let items: Vec<(usize, usize)> = (0..9)
                .map(|i| {
                    let slot = if trial % 2 == 0 { 0 } else { rng.random_range(0..4) };
                    (if i == 0 { 0 } else { slot }, rng.random_range(0..12))
                })
                .collect();
            let group = Group { items: items.clone() };
            let margin = 1.5;

            let mut grads = ScorerParams::zeros(shape);
            let mut dtime = vec![0.0; times.len() * shape.hidden];
            let tp = project_times(&params, &times);
            let loss = group_loss_grad(&params, &store, &tp, &group, margin, &mut grads, &mut dtime);
            fold_time_grad(&mut grads, &dtime, &times);

            let ex = |(s, y): (usize, usize)| Example {
                text: store.by_slot(s),
                time: times[y].as_slice(),
            };
            let negs: Vec<Example> = items[1..].iter().map(|&i| ex(i)).collect();
            let (ref_loss, ref_grads) = margin_loss_grad(&params, ex(items[0]), &negs, margin).unwrap();
            assert!((loss - ref_loss).abs() < 1e-12);
            for (a, b) in grads.values().iter().zip(ref_grads.values()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            negatives: 8,
            batch_size: 32,
            hidden: 16,
            time_dim: 16,
            seed,
            ..TrainConfig::default()
        }
    }

    fn small_graph() -> Dataset {
        planted_era_graph(&EraGraphConfig {
            entities: 40,
            facts: 120,
            ..EraGraphConfig::default()
        })
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let ds = small_graph();
        let enc = HashingEncoder::new(24, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..small_config(5)
        };
        let out = train(&ds, &enc, Variant::Names, &cfg).unwrap();
        let shape = Shape {
            text_dim: 24,
            time_dim: 16,
            hidden: 16,
        };
        assert_eq!(out.params, initial_params(shape, 5));
        assert!(out.report.epoch_losses.is_empty());
    }

    #[test]
    fn deterministic_across_runs_and_execution_modes() {
        let ds = small_graph();
        let enc = HashingEncoder::new(24, 0).unwrap();
        let a = train(&ds, &enc, Variant::Names, &small_config(7)).unwrap();
        let b = train(&ds, &enc, Variant::Names, &small_config(7)).unwrap();
        let seq = TrainConfig {
            execution: Execution::Sequential,
            ..small_config(7)
        };
        let c = train(&ds, &enc, Variant::Names, &seq).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.params, c.params);
        assert_eq!(a.report, c.report);
        let other = train(&ds, &enc, Variant::Names, &small_config(8)).unwrap();
        assert_ne!(a.params, other.params);
    }

    #[test]
    fn entity_corrupted_training_runs() {
        let ds = small_graph();
        let enc = HashingEncoder::new(24, 0).unwrap();
        let cfg = TrainConfig {
            negative_kind: NegativeKind::EntityCorrupted,
            ..small_config(1)
        };
        let out = train(&ds, &enc, Variant::Names, &cfg).unwrap();
        assert_eq!(out.report.epoch_losses.len(), 3);
        assert!(out.params.is_finite());
    }

    #[test]
    fn loss_decreases_on_planted_data() {
        let ds = small_graph();
        let enc = HashingEncoder::new(32, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 15,
            learning_rate: 0.01,
            ..small_config(3)
        };
        let out = train(&ds, &enc, Variant::Names, &cfg).unwrap();
        let l = &out.report.epoch_losses;
        assert!(l.last().unwrap() < &l[0], "{l:?}");
    }

    #[test]
    fn non_finite_embeddings_are_rejected() {
        let ds = small_graph();
        let err = train(&ds, &Constant(f64::NAN), Variant::Names, &small_config(0));
        assert!(matches!(err, Err(Error::NonFiniteEmbedding { .. })));
    }

    #[test]
    fn overflowing_scores_abort_at_first_batch() {
        let ds = small_graph();
        let err = train(&ds, &Constant(1e308), Variant::Names, &small_config(0));
        assert!(
            matches!(err, Err(Error::NonFiniteLoss { epoch: 1, batch: 1 })),
            "{err:?}"
        );
    }

    struct Constant(f64);

    impl TextEncoder for Constant {
        fn dim(&self) -> usize {
            4
        }
        fn encode(&self, _: &crate::text::TripleSentence) -> Result<TripleEmbedding> {
            Ok(TripleEmbedding(vec![self.0; 4]))
        }
    }
}
