//! Deterministic synthetic graphs for tests, acceptance runs and benchmarks.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{
    Dataset, EntityId, EntityRecord, Quadruple, RelationId, RelationRecord, TimeInterval, Triple, Year,
};

/// Era words planted in subject names. Each maps to one validity interval.
pub const ERA_WORDS: [&str; 10] = [
    "aurora", "basalt", "cobalt", "dune", "ember", "fjord", "granite", "harbor", "indigo", "juniper",
];

const RELATION_NAMES: [&str; 8] = [
    "works_at",
    "lives_in",
    "member_of",
    "plays_for",
    "studied_at",
    "owns",
    "visited",
    "leads",
];

/// A graph whose fact intervals are decided by an era word in the subject's name.
#[derive(Debug, Clone)]
pub struct EraGraphConfig {
    /// Split between subjects (carrying era words) and objects (3:1).
    pub entities: usize,
    pub relations: usize,
    /// Distinct facts over all splits.
    pub facts: usize,
    pub first_year: Year,
    /// Years between consecutive era starts; each interval spans `era_step + 1` years.
    pub era_step: Year,
    /// Fraction of facts held out in each of valid and test.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for EraGraphConfig {
    fn default() -> Self {
        Self {
            entities: 200,
            relations: 4,
            facts: 3000,
            first_year: 1900,
            era_step: 10,
            holdout: 0.1,
            seed: 17,
        }
    }
}

impl EraGraphConfig {
    /// The interval planted for era `era`.
    pub fn era_interval(&self, era: usize) -> (Year, Year) {
        let start = self.first_year + self.era_step * era as Year;
        (start, start + self.era_step)
    }
}

/// Era index of an entity generated by [`planted_era_graph`], if it is a subject.
pub fn era_of(ds: &Dataset, entity: EntityId) -> Option<usize> {
    let name = &ds.entity(entity).name;
    ERA_WORDS.iter().position(|w| name.split('_').any(|t| t == *w))
}

pub fn planted_era_graph(config: &EraGraphConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let subjects = (config.entities * 3 / 4).max(1);
    let objects = (config.entities - subjects).max(1);
    let mut entities = Vec::with_capacity(subjects + objects);
    for i in 0..subjects {
        let era = i % ERA_WORDS.len();
        entities.push(EntityRecord {
            id: EntityId(i as u32),
            key: format!("s{i}"),
            name: format!("person{i}_{}", ERA_WORDS[era]),
            description: format!("someone from the {} period", ERA_WORDS[era]),
        });
    }
    for j in 0..objects {
        let id = subjects + j;
        entities.push(EntityRecord {
            id: EntityId(id as u32),
            key: format!("o{j}"),
            name: format!("place{j}"),
            description: String::new(),
        });
    }
    let relations: Vec<RelationRecord> = (0..config.relations)
        .map(|r| RelationRecord {
            id: RelationId(r as u32),
            key: format!("r{r}"),
            name: RELATION_NAMES[r % RELATION_NAMES.len()].to_string(),
        })
        .collect();

    let max_facts = subjects * objects * config.relations;
    let target = config.facts.min(max_facts);
    let mut seen = HashSet::new();
    let mut quads = Vec::with_capacity(target);
    // every subject gets at least one fact before random fill
    let mut forced: Vec<usize> = (0..subjects).collect();
    forced.shuffle(&mut rng);
    while quads.len() < target {
        let s = forced.pop().unwrap_or_else(|| rng.random_range(0..subjects));
        let t = Triple {
            subject: EntityId(s as u32),
            relation: RelationId(rng.random_range(0..config.relations) as u32),
            object: EntityId((subjects + rng.random_range(0..objects)) as u32),
        };
        if !seen.insert(t) {
            continue;
        }
        let (start, end) = config.era_interval(s % ERA_WORDS.len());
        quads.push(Quadruple::with_triple(
            t,
            TimeInterval::closed(start, end).expect("ordered"),
        ));
    }

    let held = ((quads.len() as f64) * config.holdout).round() as usize;
    let test = quads.split_off(quads.len() - held);
    let valid = quads.split_off(quads.len() - held);
    Dataset::from_parts(entities, relations, quads, valid, test).expect("generator output is valid")
}

#[derive(Debug, Clone)]
pub struct RandomGraphConfig {
    pub entities: usize,
    pub relations: usize,
    /// Edges beyond the initial ring that gives every entity degree two.
    pub extra_edges: usize,
    pub first_year: Year,
    pub last_year: Year,
    /// Share of facts whose start or end is unknown.
    pub open_fraction: f64,
    pub seed: u64,
}

impl Default for RandomGraphConfig {
    fn default() -> Self {
        Self {
            entities: 500,
            relations: 4,
            extra_edges: 2000,
            first_year: 1900,
            last_year: 2000,
            open_fraction: 0.2,
            seed: 1,
        }
    }
}

/// Random temporal graph with every fact in the train split. Entities have degree
/// at least two and relations are assigned round-robin on the ring.
pub fn random_graph(config: &RandomGraphConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.entities;
    let entities = (0..n)
        .map(|i| EntityRecord {
            id: EntityId(i as u32),
            key: format!("e{i}"),
            name: format!("entity{i}"),
            description: String::new(),
        })
        .collect();
    let relations = (0..config.relations)
        .map(|r| RelationRecord {
            id: RelationId(r as u32),
            key: format!("r{r}"),
            name: RELATION_NAMES[r % RELATION_NAMES.len()].to_string(),
        })
        .collect();

    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    for i in 0..n {
        let t = Triple {
            subject: EntityId(i as u32),
            relation: RelationId((i % config.relations) as u32),
            object: EntityId(((i + 1) % n) as u32),
        };
        if seen.insert(t) {
            triples.push(t);
        }
    }
    let mut added = 0;
    while added < config.extra_edges {
        let s = rng.random_range(0..n);
        let o = rng.random_range(0..n);
        if s == o {
            continue;
        }
        let t = Triple {
            subject: EntityId(s as u32),
            relation: RelationId(rng.random_range(0..config.relations) as u32),
            object: EntityId(o as u32),
        };
        if seen.insert(t) {
            triples.push(t);
            added += 1;
        }
    }

    let span = config.last_year - config.first_year;
    let quads: Vec<Quadruple> = triples
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let interval = if i == 0 {
                // pin the range to the configured years
                TimeInterval::closed(config.first_year, config.last_year).unwrap()
            } else {
                let a = config.first_year + rng.random_range(0..=span);
                let b = (a + rng.random_range(0..=20)).min(config.last_year);
                if rng.random_bool(config.open_fraction) {
                    if rng.random_bool(0.5) {
                        TimeInterval::right_open(a)
                    } else {
                        TimeInterval::left_open(b)
                    }
                } else {
                    TimeInterval::closed(a, b).unwrap()
                }
            };
            Quadruple::with_triple(t, interval)
        })
        .collect();
    Dataset::from_parts(entities, relations, quads, vec![], vec![]).expect("generator output is valid")
}

/// Gaussian points labelled by the sign of their projection on a hidden unit
/// direction; points closer than `margin` to the separating plane are redrawn.
pub fn planted_direction_points(
    n: usize,
    dim: usize,
    margin: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|x| *x /= norm);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    while xs.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let proj: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum();
        if proj.abs() < margin {
            continue;
        }
        // alternate labels to keep classes balanced
        let want_positive = xs.len() % 2 == 0;
        let x = if (proj > 0.0) == want_positive {
            x
        } else {
            x.into_iter().map(|v| -v).collect()
        };
        xs.push(x);
        ys.push(want_positive);
    }
    (xs, ys, dir)
}
