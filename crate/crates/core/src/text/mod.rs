//! Triple sentences and text encoders.

mod table;

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use table::{EmbeddingTable, TableEncoder};

use crate::data::{Dataset, Triple};
use crate::error::{Error, Result};
use crate::exec::Execution;

pub const DEFAULT_TEXT_DIM: usize = 768;

/// Which parts of a triple go into its sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    /// Entity and relation names only.
    Names,
    /// Names followed by the subject and object descriptions.
    #[default]
    NamesDescriptions,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Names => "N",
            Variant::NamesDescriptions => "ND",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" | "names" => Ok(Variant::Names),
            "ND" | "nd" | "names+descriptions" => Ok(Variant::NamesDescriptions),
            other => Err(Error::Config(format!("unknown variant `{other}` (use N or ND)"))),
        }
    }
}

/// 64-bit FNV-1a over the UTF-8 bytes of a sentence. Also used by the offline
/// extractor, so it must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey(pub u64);

impl SentenceKey {
    pub fn of(text: &str) -> Self {
        SentenceKey(fnv1a64(text.as_bytes()))
    }

    pub fn parse(hex: &str) -> Option<Self> {
        if hex.len() != 16 {
            return None;
        }
        u64::from_str_radix(hex, 16).ok().map(SentenceKey)
    }
}

impl fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleSentence {
    pub text: String,
    pub variant: Variant,
}

impl TripleSentence {
    pub fn key(&self) -> SentenceKey {
        SentenceKey::of(&self.text)
    }
}

/// Underscores become spaces and whitespace runs collapse to one space.
pub fn normalize_name(name: &str) -> String {
    name.replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn build_sentence(triple: Triple, ds: &Dataset, variant: Variant) -> TripleSentence {
    let subject = ds.entity(triple.subject);
    let object = ds.entity(triple.object);
    let mut parts = vec![
        normalize_name(&subject.name),
        normalize_name(&ds.relation(triple.relation).name),
        normalize_name(&object.name),
    ];
    if variant == Variant::NamesDescriptions {
        parts.push(
            subject
                .description
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" "),
        );
        parts.push(
            object
                .description
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    parts.retain(|p| !p.is_empty());
    TripleSentence {
        text: parts.join(" "),
        variant,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleEmbedding(pub Vec<f64>);

impl TripleEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &TripleEmbedding) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na: f64 = self.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.0.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Sentence-to-vector map. Implementations hold no mutable state.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, sentence: &TripleSentence) -> Result<TripleEmbedding>;
}

/// Bag-of-tokens encoder for tests and offline runs without a language model.
///
/// Every lowercased whitespace token maps to a fixed pseudo-random unit vector seeded
/// by its hash; the sentence vector is the L2-normalized sum. Token order is ignored.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dim: usize,
    seed: u64,
}

impl HashingEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("encoder dimension must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let seed = fnv1a64(token.as_bytes()) ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x / norm;
        }
    }
}

impl TextEncoder for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentence: &TripleSentence) -> Result<TripleEmbedding> {
        let mut acc = vec![0.0; self.dim];
        for token in sentence.text.split_whitespace() {
            self.token_vector(&token.to_lowercase(), &mut acc);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(TripleEmbedding(acc))
    }
}

/// Embeddings of triples encoded so far, addressed by triple.
#[derive(Debug, Default, Clone)]
pub struct TripleEmbeddings {
    index: HashMap<Triple, usize>,
    vectors: Vec<TripleEmbedding>,
}

impl TripleEmbeddings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, triple: &Triple) -> Option<&[f64]> {
        self.index.get(triple).map(|&i| self.vectors[i].as_slice())
    }

    /// Inserts a precomputed embedding, replacing any cached one.
    pub fn insert(&mut self, triple: Triple, embedding: TripleEmbedding) {
        match self.index.get(&triple) {
            Some(&i) => self.vectors[i] = embedding,
            None => {
                self.index.insert(triple, self.vectors.len());
                self.vectors.push(embedding);
            }
        }
    }

    pub fn slot(&self, triple: &Triple) -> Option<usize> {
        self.index.get(triple).copied()
    }

    pub fn by_slot(&self, slot: usize) -> &[f64] {
        self.vectors[slot].as_slice()
    }

    /// Encodes every triple in `triples` that is not cached yet, in input order.
    pub fn ensure(
        &mut self,
        triples: &[Triple],
        ds: &Dataset,
        encoder: &dyn TextEncoder,
        variant: Variant,
        exec: Execution,
    ) -> Result<()> {
        let mut missing = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for t in triples {
            if !self.index.contains_key(t) && queued.insert(*t) {
                missing.push(*t);
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let encoded = exec.try_map(&missing, |t| {
            let sentence = build_sentence(*t, ds, variant);
            let e = encoder.encode(&sentence)?;
            if e.0.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteEmbedding {
                    sentence: sentence.text,
                });
            }
            if e.dim() != encoder.dim() {
                return Err(Error::Shape {
                    what: "triple embedding",
                    expected: encoder.dim(),
                    actual: e.dim(),
                });
            }
            Ok(e)
        })?;
        for (t, e) in missing.into_iter().zip(encoded) {
            self.index.insert(t, self.vectors.len());
            self.vectors.push(e);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EntityId, EntityRecord, Quadruple, RelationId, RelationRecord, TimeInterval};

    fn toy() -> Dataset {
        let ent = |i: u32, name: &str, desc: &str| EntityRecord {
            id: EntityId(i),
            key: i.to_string(),
            name: name.into(),
            description: desc.into(),
        };
        let rel = |i: u32, name: &str| RelationRecord {
            id: RelationId(i),
            key: i.to_string(),
            name: name.into(),
        };
        Dataset::from_parts(
            vec![
                ent(0, "Obama", "44th president of the United States"),
                ent(1, "U.S.", "country in North America"),
                ent(2, "Lionel_Messi", ""),
            ],
            vec![rel(0, "presidentOf"), rel(1, "member_of_sports_team")],
            vec![Quadruple {
                subject: EntityId(0),
                relation: RelationId(0),
                object: EntityId(1),
                interval: TimeInterval::closed(2009, 2017).unwrap(),
            }],
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn triple(s: u32, r: u32, o: u32) -> Triple {
        Triple {
            subject: EntityId(s),
            relation: RelationId(r),
            object: EntityId(o),
        }
    }

    #[test]
    fn sentences() {
        let ds = toy();
        let n = build_sentence(triple(0, 0, 1), &ds, Variant::Names);
        assert_eq!(n.text, "Obama presidentOf U.S.");
        let nd = build_sentence(triple(0, 0, 1), &ds, Variant::NamesDescriptions);
        assert_eq!(
            nd.text,
            "Obama presidentOf U.S. 44th president of the United States country in North America"
        );
        let under = build_sentence(triple(2, 1, 1), &ds, Variant::NamesDescriptions);
        assert_eq!(
            under.text,
            "Lionel Messi member of sports team U.S. country in North America"
        );
        assert_ne!(n.key(), nd.key());
    }

    #[test]
    fn key_is_fnv1a() {
        // published FNV-1a test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
        let k = SentenceKey::of("foobar");
        assert_eq!(k.to_string(), "85944171f73967e8");
        assert_eq!(SentenceKey::parse("85944171f73967e8"), Some(k));
        assert_eq!(SentenceKey::parse("xyz"), None);
    }

    fn sentence(text: &str) -> TripleSentence {
        TripleSentence {
            text: text.into(),
            variant: Variant::Names,
        }
    }

    #[test]
    fn hashing_encoder_is_deterministic_and_unit() {
        let enc = HashingEncoder::new(96, 7).unwrap();
        let a = enc.encode(&sentence("alpha beta gamma")).unwrap();
        let b = enc.encode(&sentence("alpha beta gamma")).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(a.0.iter().all(|x| x.is_finite()));
        let permuted = enc.encode(&sentence("gamma alpha beta")).unwrap();
        for (x, y) in a.0.iter().zip(&permuted.0) {
            assert!((x - y).abs() < 1e-12);
        }
        let other_seed = HashingEncoder::new(96, 8).unwrap();
        assert_ne!(a, other_seed.encode(&sentence("alpha beta gamma")).unwrap());
    }

    #[test]
    fn token_overlap_raises_cosine() {
        let enc = HashingEncoder::new(DEFAULT_TEXT_DIM, 1).unwrap();
        let base = enc.encode(&sentence("Obama presidentOf United States")).unwrap();
        let close = enc.encode(&sentence("Obama presidentOf United Kingdom")).unwrap();
        let far = enc.encode(&sentence("Messi playsFor Barcelona club")).unwrap();
        // three of four tokens shared: cosine is about 3/4 for near-orthogonal tokens
        assert!(base.cosine(&close) > 0.6);
        assert!(base.cosine(&far).abs() < 0.2);
        assert!(base.cosine(&close) > base.cosine(&far));
    }

    #[test]
    fn cache_encodes_each_triple_once() {
        let ds = toy();
        let enc = HashingEncoder::new(16, 0).unwrap();
        let mut store = TripleEmbeddings::new();
        let ts = [triple(0, 0, 1), triple(2, 1, 1), triple(0, 0, 1)];
        store
            .ensure(&ts, &ds, &enc, Variant::Names, Execution::Sequential)
            .unwrap();
        assert_eq!(store.len(), 2);
        let direct = enc.encode(&build_sentence(ts[1], &ds, Variant::Names)).unwrap();
        assert_eq!(store.get(&ts[1]).unwrap(), direct.as_slice());
    }
}
