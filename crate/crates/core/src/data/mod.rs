//! Temporal knowledge graph data model.

mod io;
mod prep;

use std::collections::HashMap;
use std::fmt;

pub use io::{file_sha256, load_dataset, write_dataset, IngestConfig, Manifest, MANIFEST_FILE};
pub use prep::{
    expand_training_points, filter_evaluable, normalize_granularity, parse_endpoint, EvaluableFact,
};

use crate::error::{Error, Result};

/// Year granularity time point.
pub type Year = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntervalKind {
    Closed,
    /// Start unknown.
    LeftOpen,
    /// End unknown.
    RightOpen,
}

/// Validity interval of a fact. The category follows from which endpoints are known,
/// so an interval with no endpoints cannot be built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeInterval {
    start: Option<Year>,
    end: Option<Year>,
}

impl TimeInterval {
    pub fn new(start: Option<Year>, end: Option<Year>) -> Result<Self> {
        match (start, end) {
            (None, None) => Err(Error::Interval("both endpoints are unknown".into())),
            (Some(s), Some(e)) if s > e => Err(Error::Interval(format!("start {s} is after end {e}"))),
            _ => Ok(Self { start, end }),
        }
    }

    pub fn closed(start: Year, end: Year) -> Result<Self> {
        Self::new(Some(start), Some(end))
    }

    pub fn right_open(start: Year) -> Self {
        Self {
            start: Some(start),
            end: None,
        }
    }

    pub fn left_open(end: Year) -> Self {
        Self {
            start: None,
            end: Some(end),
        }
    }

    pub fn start(&self) -> Option<Year> {
        self.start
    }

    pub fn end(&self) -> Option<Year> {
        self.end
    }

    pub fn kind(&self) -> IntervalKind {
        match (self.start, self.end) {
            (Some(_), Some(_)) => IntervalKind::Closed,
            (None, Some(_)) => IntervalKind::LeftOpen,
            (Some(_), None) => IntervalKind::RightOpen,
            (None, None) => unreachable!("rejected by constructor"),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.kind() == IntervalKind::Closed
    }

    /// Whether `year` is a known-valid time point of this interval. For open intervals
    /// only the known endpoint qualifies.
    pub fn covers(&self, year: Year) -> bool {
        match (self.start, self.end) {
            (Some(s), Some(e)) => s <= year && year <= e,
            (Some(s), None) => year == s,
            (None, Some(e)) => year == e,
            (None, None) => false,
        }
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |y: Option<Year>| y.map_or_else(|| "-".to_string(), |y| y.to_string());
        write!(f, "[{}, {}]", show(self.start), show(self.end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub interval: TimeInterval,
}

impl Quadruple {
    pub fn triple(&self) -> Triple {
        Triple {
            subject: self.subject,
            relation: self.relation,
            object: self.object,
        }
    }

    pub fn with_triple(triple: Triple, interval: TimeInterval) -> Self {
        Self {
            subject: triple.subject,
            relation: triple.relation,
            object: triple.object,
            interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    pub id: EntityId,
    /// Identifier used in the source files.
    pub key: String,
    pub name: String,
    /// May be empty.
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRecord {
    pub id: RelationId,
    pub key: String,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeRange {
    pub min: Year,
    pub max: Year,
}

impl TimeRange {
    pub fn new(min: Year, max: Year) -> Result<Self> {
        if min > max {
            return Err(Error::Config(format!("time range [{min}, {max}] is empty")));
        }
        Ok(Self { min, max })
    }

    /// Number of years in the range.
    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, year: Year) -> bool {
        self.min <= year && year <= self.max
    }

    pub fn years(&self) -> impl Iterator<Item = Year> + Clone {
        self.min..=self.max
    }

    /// Position of `year` relative to the start of the range.
    pub fn offset(&self, year: Year) -> usize {
        debug_assert!(self.contains(year));
        (year - self.min) as usize
    }

    pub fn clamp(&self, year: Year) -> Year {
        year.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Start,
    End,
}

/// One training example: a train quadruple reduced to a single known time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingPoint {
    /// Index into the train split.
    pub quad: usize,
    pub year: Year,
    pub endpoint: Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Valid,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Valid, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Valid => "valid",
            SplitKind::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "valid" => Ok(SplitKind::Valid),
            "test" => Ok(SplitKind::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// A loaded, fully resolved dataset. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub entities: Vec<EntityRecord>,
    pub relations: Vec<RelationRecord>,
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    /// Computed from the train split's known endpoints; `[0, 0]` when there are no facts at all.
    pub range: TimeRange,
    /// Valid/test endpoints outside `range`; they are clamped when encoded.
    pub out_of_range: Vec<String>,
}

impl Dataset {
    /// Assembles a dataset from parts, validating ids and computing the time range.
    pub fn from_parts(
        entities: Vec<EntityRecord>,
        relations: Vec<RelationRecord>,
        train: Vec<Quadruple>,
        valid: Vec<Quadruple>,
        test: Vec<Quadruple>,
    ) -> Result<Self> {
        for (i, e) in entities.iter().enumerate() {
            if e.id.index() != i {
                return Err(Error::Config(format!("entity ids are not dense at {i}")));
            }
        }
        for (i, r) in relations.iter().enumerate() {
            if r.id.index() != i {
                return Err(Error::Config(format!("relation ids are not dense at {i}")));
            }
        }
        for q in train.iter().chain(&valid).chain(&test) {
            if q.subject.index() >= entities.len()
                || q.object.index() >= entities.len()
                || q.relation.index() >= relations.len()
            {
                return Err(Error::Config(format!("quadruple {q:?} has a dangling id")));
            }
        }
        let range = if train.is_empty() && valid.is_empty() && test.is_empty() {
            TimeRange::new(0, 0)?
        } else {
            train_range(&train)?
        };
        let mut ds = Dataset {
            entities,
            relations,
            train,
            valid,
            test,
            range,
            out_of_range: Vec::new(),
        };
        ds.check_disjoint()?;
        ds.out_of_range = ds.collect_out_of_range();
        for w in &ds.out_of_range {
            log::warn!("{w}");
        }
        Ok(ds)
    }

    pub fn split(&self, kind: SplitKind) -> &[Quadruple] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity(&self, id: EntityId) -> &EntityRecord {
        &self.entities[id.index()]
    }

    pub fn relation(&self, id: RelationId) -> &RelationRecord {
        &self.relations[id.index()]
    }

    pub fn all_quadruples(&self) -> impl Iterator<Item = &Quadruple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Distinct triples over all splits in first-occurrence order.
    pub fn distinct_triples(&self) -> Vec<Triple> {
        let mut seen = std::collections::HashSet::new();
        self.all_quadruples()
            .map(Quadruple::triple)
            .filter(|t| seen.insert(*t))
            .collect()
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut owner: HashMap<&Quadruple, SplitKind> = HashMap::new();
        for kind in SplitKind::ALL {
            for q in self.split(kind) {
                match owner.get(q) {
                    Some(&prev) if prev != kind => {
                        return Err(Error::Config(format!(
                            "quadruple {:?} {} appears in both {} and {}",
                            q.triple(),
                            q.interval,
                            prev.name(),
                            kind.name()
                        )));
                    }
                    _ => {
                        owner.insert(q, kind);
                    }
                }
            }
        }
        Ok(())
    }

    fn collect_out_of_range(&self) -> Vec<String> {
        let mut out = Vec::new();
        for kind in [SplitKind::Valid, SplitKind::Test] {
            for (i, q) in self.split(kind).iter().enumerate() {
                for y in [q.interval.start(), q.interval.end()].into_iter().flatten() {
                    if !self.range.contains(y) {
                        out.push(format!(
                            "{} fact {i}: year {y} outside train range [{}, {}], clamped to {}",
                            kind.name(),
                            self.range.min,
                            self.range.max,
                            self.range.clamp(y)
                        ));
                    }
                }
            }
        }
        out
    }
}

fn train_range(train: &[Quadruple]) -> Result<TimeRange> {
    let years = train
        .iter()
        .flat_map(|q| [q.interval.start(), q.interval.end()])
        .flatten();
    let (min, max) = years.fold((Year::MAX, Year::MIN), |(lo, hi), y| (lo.min(y), hi.max(y)));
    if min > max {
        return Err(Error::Config("train split has no known time points".into()));
    }
    TimeRange::new(min, max)
}
