//! Per-year scoring, softmax and greedy coalescing of years into intervals.

use super::interval::Span;
use crate::data::{TimeRange, Year};
use crate::error::{Error, Result};
use crate::scorer::{project_text, project_times, ScorerParams};
use crate::time::TimeEncoder;

/// Cumulative probabilities within this distance of θ count as reaching it.
const THETA_TOLERANCE: f64 = 1e-9;

/// Probability of each year of a range.
#[derive(Debug, Clone, PartialEq)]
pub struct YearDistribution {
    range: TimeRange,
    probs: Vec<f64>,
}

impl YearDistribution {
    /// Softmax of one score per year of `range`.
    pub fn from_scores(range: TimeRange, scores: &[f64]) -> Result<Self> {
        if scores.len() != range.len() {
            return Err(Error::Shape {
                what: "year scores",
                expected: range.len(),
                actual: scores.len(),
            });
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Config("year scores must be finite".into()));
        }
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Ok(Self {
            range,
            probs: exps.into_iter().map(|e| e / z).collect(),
        })
    }

    /// Wraps probabilities that already sum to one.
    pub fn from_probs(range: TimeRange, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != range.len() {
            return Err(Error::Shape {
                what: "year probabilities",
                expected: range.len(),
                actual: probs.len(),
            });
        }
        Ok(Self { range, probs })
    }

    pub fn range(&self) -> TimeRange {
        self.range
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, year: Year) -> f64 {
        if self.range.contains(year) {
            self.probs[self.range.offset(year)]
        } else {
            0.0
        }
    }

    /// The `n` most probable years, highest first; ties go to the earlier year.
    pub fn top_years(&self, n: usize) -> Vec<Year> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(n)
            .map(|i| self.range.min + i as Year)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedInterval {
    pub span: Span,
    pub cum_prob: f64,
    pub seed: Year,
    pub seed_prob: f64,
}

/// Up to `k` disjoint intervals. Each starts at the most probable unused year and
/// absorbs the more probable unused neighbour (right on ties) until its mass reaches
/// `theta` or it cannot grow. Output is ordered by seed probability.
pub fn greedy_coalesce(dist: &YearDistribution, k: usize, theta: f64) -> Result<Vec<PredictedInterval>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0, 1], got {theta}"
        )));
    }
    let p = &dist.probs;
    let n = p.len();
    let mut used = vec![false; n];
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let seed = (0..n)
            .filter(|&i| !used[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if p[b] >= p[i] => Some(b),
                _ => Some(i),
            });
        let Some(seed) = seed else { break };
        let (mut lo, mut hi) = (seed, seed);
        let mut cum = p[seed];
        used[seed] = true;
        while cum < theta - THETA_TOLERANCE {
            let left = (lo > 0 && !used[lo - 1]).then(|| lo - 1);
            let right = (hi + 1 < n && !used[hi + 1]).then_some(hi + 1);
            let next = match (left, right) {
                (Some(l), Some(r)) => {
                    if p[l] > p[r] {
                        l
                    } else {
                        r
                    }
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => break,
            };
            used[next] = true;
            cum += p[next];
            lo = lo.min(next);
            hi = hi.max(next);
        }
        let year = |i: usize| dist.range.min + i as Year;
        out.push(PredictedInterval {
            span: Span::new(year(lo), year(hi)),
            cum_prob: cum,
            seed: year(seed),
            seed_prob: p[seed],
        });
    }
    Ok(out)
}

/// Scores every year of a range for any triple embedding, sharing the time half of
/// the first layer across calls.
#[derive(Debug, Clone)]
pub struct YearScorer<'a> {
    params: &'a ScorerParams,
    range: TimeRange,
    time_proj: Vec<f64>,
}

impl<'a> YearScorer<'a> {
    pub fn new(params: &'a ScorerParams, range: TimeRange) -> Result<Self> {
        let encoder = TimeEncoder::for_range(&range, params.shape().time_dim)?;
        let time_proj = project_times(params, &encoder.encode_range(&range));
        Ok(Self {
            params,
            range,
            time_proj,
        })
    }

    pub fn range(&self) -> TimeRange {
        self.range
    }

    pub fn scores(&self, text: &[f64]) -> Result<Vec<f64>> {
        let shape = self.params.shape();
        if text.len() != shape.text_dim {
            return Err(Error::Shape {
                what: "triple embedding",
                expected: shape.text_dim,
                actual: text.len(),
            });
        }
        let k = shape.hidden;
        let base = project_text(self.params, text);
        let w2 = self.params.w2();
        let b2 = self.params.b2();
        Ok(self
            .time_proj
            .chunks_exact(k)
            .map(|tp| {
                base.iter()
                    .zip(tp)
                    .zip(w2)
                    .map(|((a, b), w)| w * (a + b).max(0.0))
                    .sum::<f64>()
                    + b2
            })
            .collect())
    }

    pub fn distribution(&self, text: &[f64]) -> Result<YearDistribution> {
        YearDistribution::from_scores(self.range, &self.scores(text)?)
    }
}
