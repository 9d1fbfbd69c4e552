//! Sinusoidal year embeddings.
//!
//! Component `2i` is `sin((t - t_min) / 10000^(i/d'))` and component `2i + 1` the
//! matching cosine. Each sin/cos pair shares one frequency, so the inner product of
//! two embeddings depends only on the distance between the years.

use crate::data::{TimeRange, Year};
use crate::error::{Error, Result};

pub const DEFAULT_TIME_DIM: usize = 64;
const BASE: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding(pub Vec<f64>);

impl TimeEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &TimeEmbedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone)]
pub struct TimeEncoder {
    origin: Year,
    frequencies: Vec<f64>,
}

impl TimeEncoder {
    /// `origin` is the earliest year of the corpus; `dim` must be even.
    pub fn new(origin: Year, dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time embedding dimension must be even and positive, got {dim}"
            )));
        }
        let frequencies = (0..dim / 2)
            .map(|i| BASE.powf(-(i as f64) / dim as f64))
            .collect();
        Ok(Self { origin, frequencies })
    }

    pub fn for_range(range: &TimeRange, dim: usize) -> Result<Self> {
        Self::new(range.min, dim)
    }

    pub fn dim(&self) -> usize {
        self.frequencies.len() * 2
    }

    pub fn origin(&self) -> Year {
        self.origin
    }

    /// Total over all integers; callers clamp out-of-range years beforehand.
    pub fn encode(&self, year: Year) -> TimeEmbedding {
        let pos = f64::from(year - self.origin);
        let mut v = Vec::with_capacity(self.dim());
        for &w in &self.frequencies {
            let (s, c) = (pos * w).sin_cos();
            v.push(s);
            v.push(c);
        }
        TimeEmbedding(v)
    }

    /// Embeddings for every year of `range`, indexed by offset.
    pub fn encode_range(&self, range: &TimeRange) -> Vec<TimeEmbedding> {
        range.years().map(|y| self.encode(y)).collect()
    }
}
