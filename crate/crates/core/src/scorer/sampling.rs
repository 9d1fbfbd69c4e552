//! Entity- and time-corrupted negative sampling.

use std::collections::HashMap;

use rand::Rng;

use crate::data::{Dataset, EntityId, Quadruple, TimeInterval, TimeRange, Triple, Year};
use crate::error::{Error, Result};

/// A triple at a single time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PointFact {
    pub triple: Triple,
    pub year: Year,
}

/// Membership test for the positive set: a point is positive when some training fact
/// of the same triple covers its year (for open intervals, only the known endpoint).
#[derive(Debug, Clone, Default)]
pub struct PositiveSet {
    by_triple: HashMap<Triple, Vec<TimeInterval>>,
}

impl PositiveSet {
    pub fn from_quadruples(quads: &[Quadruple]) -> Self {
        let mut by_triple: HashMap<Triple, Vec<TimeInterval>> = HashMap::new();
        for q in quads {
            by_triple.entry(q.triple()).or_default().push(q.interval);
        }
        Self { by_triple }
    }

    pub fn contains(&self, point: &PointFact) -> bool {
        self.by_triple
            .get(&point.triple)
            .is_some_and(|ivs| ivs.iter().any(|iv| iv.covers(point.year)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NegativeSet(pub Vec<PointFact>);

impl NegativeSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PointFact> {
        self.0.iter()
    }
}

/// Years of `range` that may corrupt a fact with interval `iv`: before the start of a
/// right-open interval, after the end of a left-open one, outside a closed one.
pub fn category_eligible_years(iv: &TimeInterval, range: &TimeRange) -> Vec<Year> {
    range
        .years()
        .filter(|&y| match (iv.start(), iv.end()) {
            (Some(s), Some(e)) => y < s || y > e,
            (Some(s), None) => y < s,
            (None, Some(e)) => y > e,
            (None, None) => false,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NegativeSampler {
    positives: PositiveSet,
    num_entities: usize,
    range: TimeRange,
    /// Draw attempts allowed per requested negative before giving up.
    pub attempts_per_negative: usize,
}

impl NegativeSampler {
    /// Positives are the training quadruples of `ds`.
    pub fn new(ds: &Dataset) -> Self {
        Self::from_parts(
            PositiveSet::from_quadruples(&ds.train),
            ds.num_entities(),
            ds.range,
        )
    }

    pub fn from_parts(positives: PositiveSet, num_entities: usize, range: TimeRange) -> Self {
        Self {
            positives,
            num_entities,
            range,
            attempts_per_negative: 100,
        }
    }

    pub fn positives(&self) -> &PositiveSet {
        &self.positives
    }

    /// `n` corruptions of the subject or object (side chosen uniformly per draw),
    /// rejecting any that land in the positive set.
    pub fn entity_corrupted<R: Rng + ?Sized>(
        &self,
        positive: PointFact,
        n: usize,
        rng: &mut R,
    ) -> Result<NegativeSet> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let budget = n.saturating_mul(self.attempts_per_negative);
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n {
            if attempts == budget {
                return Err(Error::Sampling(format!(
                    "only {} of {n} entity-corrupted negatives for {:?} at {} after {budget} draws",
                    out.len(),
                    positive.triple,
                    positive.year
                )));
            }
            attempts += 1;
            let entity = EntityId(rng.random_range(0..self.num_entities) as u32);
            let mut triple = positive.triple;
            if rng.random_bool(0.5) {
                triple.subject = entity;
            } else {
                triple.object = entity;
            }
            let candidate = PointFact {
                triple,
                year: positive.year,
            };
            if !self.positives.contains(&candidate) {
                out.push(candidate);
            }
        }
        Ok(NegativeSet(out))
    }

    /// Years eligible under the category rule that are not positive for this triple.
    pub fn eligible_years(&self, fact: &Quadruple) -> Vec<Year> {
        let triple = fact.triple();
        category_eligible_years(&fact.interval, &self.range)
            .into_iter()
            .filter(|&year| !self.positives.contains(&PointFact { triple, year }))
            .collect()
    }

    /// `n` draws, uniform with replacement, from [`Self::eligible_years`].
    pub fn time_corrupted<R: Rng + ?Sized>(
        &self,
        fact: &Quadruple,
        n: usize,
        rng: &mut R,
    ) -> Result<NegativeSet> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let years = self.eligible_years(fact);
        if years.is_empty() {
            return Err(Error::Sampling(format!(
                "no year in [{}, {}] can corrupt {:?} {}: the interval leaves no eligible year",
                self.range.min,
                self.range.max,
                fact.triple(),
                fact.interval
            )));
        }
        let triple = fact.triple();
        Ok(NegativeSet(
            (0..n)
                .map(|_| PointFact {
                    triple,
                    year: years[rng.random_range(0..years.len())],
                })
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RelationId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triple(s: u32, o: u32) -> Triple {
        Triple {
            subject: EntityId(s),
            relation: RelationId(0),
            object: EntityId(o),
        }
    }

    fn quad(s: u32, o: u32, iv: TimeInterval) -> Quadruple {
        Quadruple::with_triple(triple(s, o), iv)
    }

    #[test]
    fn eligible_year_sets() {
        let range = TimeRange::new(2000, 2010).unwrap();
        let closed = TimeInterval::closed(2004, 2008).unwrap();
        assert_eq!(
            category_eligible_years(&closed, &range),
            vec![2000, 2001, 2002, 2003, 2009, 2010]
        );
        assert_eq!(
            category_eligible_years(&TimeInterval::right_open(2005), &range),
            vec![2000, 2001, 2002, 2003, 2004]
        );
        assert_eq!(
            category_eligible_years(&TimeInterval::left_open(2008), &range),
            vec![2009, 2010]
        );
        let full = TimeInterval::closed(2000, 2010).unwrap();
        assert!(category_eligible_years(&full, &range).is_empty());
    }

    #[test]
    fn full_range_interval_is_a_sampling_error() {
        let range = TimeRange::new(2000, 2010).unwrap();
        let q = quad(0, 1, TimeInterval::closed(2000, 2010).unwrap());
        let s = NegativeSampler::from_parts(PositiveSet::from_quadruples(&[q]), 2, range);
        let err = s.time_corrupted(&q, 4, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Sampling(_))));
    }

    #[test]
    fn time_negatives_avoid_other_positive_facts_of_the_triple() {
        let range = TimeRange::new(2000, 2010).unwrap();
        let q = quad(0, 1, TimeInterval::closed(2004, 2008).unwrap());
        let again = quad(0, 1, TimeInterval::closed(2000, 2001).unwrap());
        let s = NegativeSampler::from_parts(PositiveSet::from_quadruples(&[q, again]), 2, range);
        assert_eq!(s.eligible_years(&q), vec![2002, 2003, 2009, 2010]);
        let negs = s
            .time_corrupted(&q, 500, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(negs.len(), 500);
        assert!(negs.iter().all(|p| [2002, 2003, 2009, 2010].contains(&p.year)));
        // every eligible year shows up
        for y in [2002, 2003, 2009, 2010] {
            assert!(negs.iter().any(|p| p.year == y));
        }
    }

    #[test]
    fn saturated_graph_exhausts_entity_sampling() {
        let range = TimeRange::new(2000, 2000).unwrap();
        let iv = TimeInterval::closed(2000, 2000).unwrap();
        // all 3x3 (s, o) pairs for the relation are positive
        let quads: Vec<Quadruple> = (0..3).flat_map(|s| (0..3).map(move |o| quad(s, o, iv))).collect();
        let s = NegativeSampler::from_parts(PositiveSet::from_quadruples(&quads), 3, range);
        let pos = PointFact {
            triple: triple(0, 1),
            year: 2000,
        };
        let err = s.entity_corrupted(pos, 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Sampling(_))));
    }

    #[test]
    fn entity_sides_are_balanced() {
        let range = TimeRange::new(2000, 2000).unwrap();
        let iv = TimeInterval::closed(2000, 2000).unwrap();
        let q = quad(0, 1, iv);
        let s = NegativeSampler::from_parts(PositiveSet::from_quadruples(&[q]), 1000, range);
        let pos = PointFact {
            triple: q.triple(),
            year: 2000,
        };
        let negs = s
            .entity_corrupted(pos, 4000, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let subject_side = negs.iter().filter(|p| p.triple.object == EntityId(1)).count();
        // binomial(4000, 0.5): 5 sigma is about 158
        assert!((subject_side as i64 - 2000).abs() < 160, "{subject_side}");
        assert!(negs.iter().all(|p| !s.positives().contains(p)));
    }
}
