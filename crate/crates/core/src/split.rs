//! Inductive splits by entity removal.
//!
//! Works on the triple-level graph of all splits merged. Candidates are visited in a
//! seeded random order; a candidate is removed only if, after removing all of its
//! remaining edges, no other entity is left without edges and no touched relation
//! falls below the edge threshold. Removed entities go alternately to valid and test
//! and take their edges with them; intervals are re-attached from the source facts.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, EntityId, Quadruple, SplitKind, Triple};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitConfig {
    /// Entities to remove into the validation split.
    pub valid_entities: usize,
    /// Entities to remove into the test split.
    pub test_entities: usize,
    pub min_relation_edges: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            valid_entities: 100,
            test_entities: 100,
            min_relation_edges: 100,
            seed: 42,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.valid_entities == 0 || self.test_entities == 0 {
            return Err(Error::Config("split targets must be positive".into()));
        }
        if self.min_relation_edges == 0 {
            return Err(Error::Config(
                "minimum relation edge count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitReport {
    pub seed: u64,
    pub min_relation_edges: usize,
    pub removed_valid: Vec<EntityId>,
    pub removed_test: Vec<EntityId>,
    pub candidates_tried: usize,
    pub rejected: usize,
    pub train_facts: usize,
    pub valid_facts: usize,
    pub test_facts: usize,
    pub warnings: Vec<String>,
}

impl SplitReport {
    /// Flat key=value rendering; entity lists use the dataset's raw keys.
    pub fn render(&self, ds: &Dataset) -> String {
        let keys = |ids: &[EntityId]| {
            ids.iter()
                .map(|&e| ds.entity(e).key.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "min_relation_edges={}", self.min_relation_edges);
        let _ = writeln!(out, "candidates_tried={}", self.candidates_tried);
        let _ = writeln!(out, "rejected={}", self.rejected);
        let _ = writeln!(out, "removed_valid_count={}", self.removed_valid.len());
        let _ = writeln!(out, "removed_test_count={}", self.removed_test.len());
        let _ = writeln!(out, "train_facts={}", self.train_facts);
        let _ = writeln!(out, "valid_facts={}", self.valid_facts);
        let _ = writeln!(out, "test_facts={}", self.test_facts);
        let _ = writeln!(out, "removed_valid={}", keys(&self.removed_valid));
        let _ = writeln!(out, "removed_test={}", keys(&self.removed_test));
        for w in &self.warnings {
            let _ = writeln!(out, "warning={w}");
        }
        out
    }
}

struct Graph {
    triples: Vec<Triple>,
    incident: Vec<Vec<usize>>,
    degree: Vec<usize>,
    relation_edges: Vec<usize>,
    alive: Vec<bool>,
}

impl Graph {
    fn new(ds: &Dataset, triples: Vec<Triple>) -> Self {
        let n = ds.num_entities();
        let mut incident = vec![Vec::new(); n];
        let mut degree = vec![0; n];
        let mut relation_edges = vec![0; ds.relations.len()];
        for (i, t) in triples.iter().enumerate() {
            incident[t.subject.index()].push(i);
            degree[t.subject.index()] += 1;
            if t.object != t.subject {
                incident[t.object.index()].push(i);
            }
            degree[t.object.index()] += 1;
            relation_edges[t.relation.index()] += 1;
        }
        let alive = vec![true; triples.len()];
        Self {
            triples,
            incident,
            degree,
            relation_edges,
            alive,
        }
    }

    fn live_edges(&self, e: EntityId) -> Vec<usize> {
        self.incident[e.index()]
            .iter()
            .copied()
            .filter(|&i| self.alive[i])
            .collect()
    }

    /// Whether removing `edges` (all live edges of `e`) keeps the constraints.
    fn removal_allowed(&self, e: EntityId, edges: &[usize], min_edges: usize) -> bool {
        let mut lost: HashMap<usize, usize> = HashMap::new();
        let mut rel_lost: HashMap<usize, usize> = HashMap::new();
        for &i in edges {
            let t = self.triples[i];
            for end in [t.subject, t.object] {
                if end != e {
                    *lost.entry(end.index()).or_default() += 1;
                }
            }
            *rel_lost.entry(t.relation.index()).or_default() += 1;
        }
        lost.iter().all(|(&n, &l)| self.degree[n] > l)
            && rel_lost
                .iter()
                .all(|(&r, &l)| self.relation_edges[r] - l >= min_edges)
    }

    fn remove(&mut self, edges: &[usize]) {
        for &i in edges {
            let t = self.triples[i];
            self.alive[i] = false;
            self.degree[t.subject.index()] -= 1;
            self.degree[t.object.index()] -= 1;
            self.relation_edges[t.relation.index()] -= 1;
        }
    }
}

/// Re-splits `ds` inductively. Returns the new dataset and a report; fails with
/// [`Error::PartialSplit`] when the candidates run out before both targets are met.
pub fn make_inductive_split(ds: &Dataset, config: &SplitConfig) -> Result<(Dataset, SplitReport)> {
    config.validate()?;
    let triples = ds.distinct_triples();
    let index: HashMap<Triple, usize> = triples.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut graph = Graph::new(ds, triples);
    let mut warnings = Vec::new();
    for (r, &count) in graph.relation_edges.iter().enumerate() {
        if count < config.min_relation_edges {
            warnings.push(format!(
                "relation {} has {count} edges before splitting, below the threshold {}",
                ds.relations[r].key, config.min_relation_edges
            ));
        }
    }
    let isolated = graph.degree.iter().filter(|&&d| d == 0).count();
    if isolated > 0 {
        warnings.push(format!("{isolated} entities have no edges in the input"));
    }

    let mut order: Vec<EntityId> = (0..ds.num_entities() as u32).map(EntityId).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    // triple index -> split it moves to
    let mut moved: Vec<Option<SplitKind>> = vec![None; graph.triples.len()];
    let mut removed_valid = Vec::new();
    let mut removed_test = Vec::new();
    let mut tried = 0;
    let mut rejected = 0;
    for e in order {
        let valid_done = removed_valid.len() >= config.valid_entities;
        let test_done = removed_test.len() >= config.test_entities;
        if valid_done && test_done {
            break;
        }
        tried += 1;
        let edges = graph.live_edges(e);
        if edges.is_empty() || !graph.removal_allowed(e, &edges, config.min_relation_edges) {
            rejected += 1;
            continue;
        }
        let to = if valid_done {
            SplitKind::Test
        } else if test_done || removed_valid.len() <= removed_test.len() {
            SplitKind::Valid
        } else {
            SplitKind::Test
        };
        graph.remove(&edges);
        for &i in &edges {
            moved[i] = Some(to);
        }
        match to {
            SplitKind::Valid => removed_valid.push(e),
            _ => removed_test.push(e),
        }
    }
    if removed_valid.len() < config.valid_entities || removed_test.len() < config.test_entities {
        return Err(Error::PartialSplit {
            valid_achieved: removed_valid.len(),
            valid_target: config.valid_entities,
            test_achieved: removed_test.len(),
            test_target: config.test_entities,
        });
    }

    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for q in ds.all_quadruples() {
        let target: &mut Vec<Quadruple> = match moved[index[&q.triple()]] {
            None => &mut train,
            Some(SplitKind::Valid) => &mut valid,
            Some(_) => &mut test,
        };
        target.push(*q);
    }
    let report = SplitReport {
        seed: config.seed,
        min_relation_edges: config.min_relation_edges,
        removed_valid,
        removed_test,
        candidates_tried: tried,
        rejected,
        train_facts: train.len(),
        valid_facts: valid.len(),
        test_facts: test.len(),
        warnings,
    };
    let out = Dataset::from_parts(ds.entities.clone(), ds.relations.clone(), train, valid, test)?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EntityRecord, RelationId, RelationRecord, TimeInterval};

    fn graph(n: u32, edges: &[(u32, u32, u32)], relations: u32) -> Dataset {
        let entities = (0..n)
            .map(|i| EntityRecord {
                id: EntityId(i),
                key: format!("e{i}"),
                name: format!("e{i}"),
                description: String::new(),
            })
            .collect();
        let rels = (0..relations)
            .map(|r| RelationRecord {
                id: RelationId(r),
                key: format!("r{r}"),
                name: format!("r{r}"),
            })
            .collect();
        let quads = edges
            .iter()
            .enumerate()
            .map(|(i, &(s, r, o))| {
                Quadruple::with_triple(
                    Triple {
                        subject: EntityId(s),
                        relation: RelationId(r),
                        object: EntityId(o),
                    },
                    TimeInterval::closed(2000 + i as i32, 2001 + i as i32).unwrap(),
                )
            })
            .collect();
        Dataset::from_parts(entities, rels, quads, vec![], vec![]).unwrap()
    }

    fn cycle(n: u32) -> Dataset {
        let edges: Vec<_> = (0..n).map(|i| (i, 0, (i + 1) % n)).collect();
        graph(n, &edges, 1)
    }

    #[test]
    fn toy_cycle_moves_two_edges() {
        let ds = cycle(6);
        let cfg = SplitConfig {
            valid_entities: 1,
            test_entities: 1,
            min_relation_edges: 1,
            seed: 0,
        };
        let (out, report) = make_inductive_split(&ds, &cfg).unwrap();
        let v = report.removed_valid[0];
        let t = report.removed_test[0];
        assert!(out.valid.iter().all(|q| q.subject == v || q.object == v));
        assert!(out.test.iter().all(|q| q.subject == t || q.object == t));
        assert_eq!(out.train.len() + out.valid.len() + out.test.len(), 6);
        // first removal always moves exactly two edges
        assert_eq!(out.valid.len(), 2);
        let mut deg = [0; 6];
        for q in &out.train {
            deg[q.subject.index()] += 1;
            deg[q.object.index()] += 1;
        }
        for e in 0..6 {
            if EntityId(e as u32) != v && EntityId(e as u32) != t {
                assert!(deg[e] >= 1, "entity {e} isolated");
            }
        }
    }

    #[test]
    fn removal_that_isolates_a_neighbour_is_rejected() {
        // star: 0 is the hub, leaves 1..=3 have degree one
        let ds = graph(4, &[(0, 0, 1), (0, 0, 2), (0, 0, 3)], 1);
        let cfg = SplitConfig {
            valid_entities: 1,
            test_entities: 1,
            min_relation_edges: 1,
            seed: 3,
        };
        // the hub can never go, and any leaf removal leaves the rest connected
        match make_inductive_split(&ds, &cfg) {
            Ok((_, r)) => {
                assert!(!r.removed_valid.contains(&EntityId(0)));
                assert!(!r.removed_test.contains(&EntityId(0)));
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn threshold_at_current_count_blocks_every_removal() {
        let ds = cycle(6);
        let cfg = SplitConfig {
            valid_entities: 1,
            test_entities: 1,
            min_relation_edges: 6,
            seed: 0,
        };
        let err = make_inductive_split(&ds, &cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::PartialSplit {
                valid_achieved: 0,
                test_achieved: 0,
                ..
            }
        ));
    }

    #[test]
    fn same_seed_same_split() {
        let ds = cycle(40);
        let cfg = SplitConfig {
            valid_entities: 3,
            test_entities: 3,
            min_relation_edges: 10,
            seed: 9,
        };
        let (a, ra) = make_inductive_split(&ds, &cfg).unwrap();
        let (b, rb) = make_inductive_split(&ds, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}
