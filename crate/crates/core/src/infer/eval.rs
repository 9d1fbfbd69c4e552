//! Interval prediction over a fact set and @k evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::decode::{greedy_coalesce, PredictedInterval, YearScorer};
use super::interval::{Metric, Span};
use crate::data::EvaluableFact;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::text::TripleEmbeddings;

pub const DEFAULT_THETA: f64 = 0.65;

/// Ranked intervals predicted for one fact.
#[derive(Debug, Clone, PartialEq)]
pub struct FactPrediction {
    pub fact_id: usize,
    pub intervals: Vec<PredictedInterval>,
}

/// Predicts up to `k` intervals for each fact. Embeddings must already cover the facts.
pub fn predict(
    facts: &[EvaluableFact],
    embeddings: &TripleEmbeddings,
    scorer: &YearScorer<'_>,
    k: usize,
    theta: f64,
    exec: Execution,
) -> Result<Vec<FactPrediction>> {
    exec.try_map(facts, |f| {
        let triple = f.quad.triple();
        let text = embeddings
            .get(&triple)
            .ok_or_else(|| Error::Config(format!("no triple embedding for fact {}", f.fact_id)))?;
        let dist = scorer.distribution(text)?;
        Ok(FactPrediction {
            fact_id: f.fact_id,
            intervals: greedy_coalesce(&dist, k, theta)?,
        })
    })
}

/// Best value of `metric` among the first `k` intervals.
pub fn best_at_k(metric: Metric, intervals: &[PredictedInterval], gold: Span, k: usize) -> Option<f64> {
    intervals
        .iter()
        .take(k)
        .map(|p| metric.eval(p.span, gold))
        .reduce(f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub metric: Metric,
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
    pub facts: usize,
}

impl MetricTable {
    pub fn get(&self, metric: Metric, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.k == k)
            .map(|r| r.value)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tk\tvalue\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{:.6}", r.metric.name(), r.k, r.value);
        }
        out
    }

    /// Aligned plain-text rendering for terminals.
    pub fn render(&self) -> String {
        let labels: Vec<String> = self
            .rows
            .iter()
            .map(|r| format!("{}@{}", r.metric.name(), r.k))
            .collect();
        let w = labels.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = format!("{:<w$}  {:>8}\n", "metric", "value");
        for (l, r) in labels.iter().zip(&self.rows) {
            let _ = writeln!(out, "{l:<w$}  {:>8.4}", r.value);
        }
        let _ = writeln!(out, "({} facts)", self.facts);
        out
    }
}

/// Mean over `facts` of the best metric value among each fact's top-k intervals.
/// Every fact needs a prediction.
pub fn evaluate(
    facts: &[EvaluableFact],
    predictions: &[FactPrediction],
    ks: &[usize],
) -> Result<MetricTable> {
    if facts.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("k values must be positive".into()));
    }
    let by_id: BTreeMap<usize, &FactPrediction> = predictions.iter().map(|p| (p.fact_id, p)).collect();
    let mut sums = vec![0.0; Metric::ALL.len() * ks.len()];
    for f in facts {
        let pred = by_id
            .get(&f.fact_id)
            .ok_or_else(|| Error::Config(format!("no prediction for fact {}", f.fact_id)))?;
        let (s, e) = f.gold();
        let gold = Span::new(s, e);
        for (mi, m) in Metric::ALL.into_iter().enumerate() {
            for (ki, &k) in ks.iter().enumerate() {
                let v = best_at_k(m, &pred.intervals, gold, k)
                    .ok_or_else(|| Error::Config(format!("fact {} has no predicted interval", f.fact_id)))?;
                sums[mi * ks.len() + ki] += v;
            }
        }
    }
    let n = facts.len() as f64;
    let mut rows = Vec::new();
    for (mi, m) in Metric::ALL.into_iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            rows.push(MetricRow {
                metric: m,
                k,
                value: sums[mi * ks.len() + ki] / n,
            });
        }
    }
    Ok(MetricTable {
        rows,
        facts: facts.len(),
    })
}

pub fn predictions_to_tsv(predictions: &[FactPrediction]) -> String {
    let mut out = String::from("fact_id\trank\tstart\tend\tcum_prob\n");
    for p in predictions {
        for (rank, iv) in p.intervals.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.9}",
                p.fact_id,
                rank + 1,
                iv.span.start,
                iv.span.end,
                iv.cum_prob
            );
        }
    }
    out
}

/// Parses a prediction dump. Seed fields are not stored and come back as the span start
/// with probability 0; ranks must be consecutive from 1 within a fact.
pub fn predictions_from_tsv(text: &str, file: &std::path::Path) -> Result<Vec<FactPrediction>> {
    let bad = |line: usize, message: String| Error::Ingestion {
        file: file.to_path_buf(),
        line,
        message,
    };
    let mut out: Vec<FactPrediction> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        if line.is_empty() || (no == 1 && line.starts_with("fact_id")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad(no, format!("expected 5 columns, found {}", cols.len())));
        }
        let int = |s: &str, what: &str| -> Result<i64> {
            s.parse().map_err(|_| bad(no, format!("bad {what} `{s}`")))
        };
        let fact_id = int(cols[0], "fact_id")? as usize;
        let rank = int(cols[1], "rank")? as usize;
        let start = int(cols[2], "start")? as i32;
        let end = int(cols[3], "end")? as i32;
        let cum_prob: f64 = cols[4]
            .parse()
            .map_err(|_| bad(no, format!("bad cum_prob `{}`", cols[4])))?;
        let iv = PredictedInterval {
            span: Span::new(start, end),
            cum_prob,
            seed: start,
            seed_prob: 0.0,
        };
        match out.last_mut() {
            Some(p) if p.fact_id == fact_id => {
                if rank != p.intervals.len() + 1 {
                    return Err(bad(no, format!("rank {rank} out of sequence")));
                }
                p.intervals.push(iv);
            }
            _ => {
                if rank != 1 {
                    return Err(bad(no, format!("fact {fact_id} starts at rank {rank}")));
                }
                out.push(FactPrediction {
                    fact_id,
                    intervals: vec![iv],
                });
            }
        }
    }
    Ok(out)
}
