use super::{Endpoint, Quadruple, TimeInterval, TrainingPoint, Year};
use crate::error::{Error, Result};

/// Reduces a `YYYY`, `YYYY-MM` or `YYYY-MM-DD` date to its year. Month and day
/// components may be masked with `#` as in YAGO dumps.
pub fn normalize_granularity(raw: &str) -> Result<Year> {
    let err = |reason| Error::DateParse {
        raw: raw.to_string(),
        reason,
    };
    let raw_trim = raw.trim();
    let mut parts = raw_trim.split('-');
    let year = parts.next().unwrap_or_default();
    if year.is_empty() || !year.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err("year component is missing or not numeric"));
    }
    let rest: Vec<&str> = parts.collect();
    if rest.len() > 2 {
        return Err(err("expected YYYY, YYYY-MM or YYYY-MM-DD"));
    }
    for (part, max) in rest.iter().zip([12u32, 31]) {
        let masked = !part.is_empty() && part.bytes().all(|b| b == b'#');
        if masked {
            continue;
        }
        if part.is_empty() || part.len() > 2 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("month or day is not numeric"));
        }
        let v: u32 = part.parse().map_err(|_| err("month or day is not numeric"))?;
        if v == 0 || v > max {
            return Err(err("month or day out of range"));
        }
    }
    year.parse().map_err(|_| err("year does not fit"))
}

/// Parses one endpoint column. `-` and fully masked dates mean "unknown".
pub fn parse_endpoint(field: &str) -> Result<Option<Year>> {
    let f = field.trim();
    if f.is_empty() || f.bytes().all(|b| b == b'-' || b == b'#') {
        return Ok(None);
    }
    normalize_granularity(f).map(Some)
}

/// Two points per closed interval (one when start equals end), one per open interval.
pub fn expand_training_points(train: &[Quadruple]) -> Vec<TrainingPoint> {
    let mut points = Vec::with_capacity(train.len() * 2);
    for (quad, q) in train.iter().enumerate() {
        let iv = q.interval;
        if let Some(year) = iv.start() {
            points.push(TrainingPoint {
                quad,
                year,
                endpoint: Endpoint::Start,
            });
        }
        if let Some(year) = iv.end() {
            if iv.start() != Some(year) {
                points.push(TrainingPoint {
                    quad,
                    year,
                    endpoint: Endpoint::End,
                });
            }
        }
    }
    points
}

/// A test fact with a closed gold interval, keyed by its position in its split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvaluableFact {
    pub fact_id: usize,
    pub quad: Quadruple,
}

impl EvaluableFact {
    pub fn gold(&self) -> (Year, Year) {
        let iv: TimeInterval = self.quad.interval;
        (iv.start().unwrap(), iv.end().unwrap())
    }
}

/// Keeps only closed-interval facts; interval metrics need both endpoints.
pub fn filter_evaluable(facts: &[Quadruple]) -> Vec<EvaluableFact> {
    let kept: Vec<EvaluableFact> = facts
        .iter()
        .enumerate()
        .filter(|(_, q)| q.interval.is_closed())
        .map(|(fact_id, q)| EvaluableFact { fact_id, quad: *q })
        .collect();
    if kept.is_empty() && !facts.is_empty() {
        log::warn!(
            "none of the {} facts has a closed interval; nothing to evaluate",
            facts.len()
        );
    }
    kept
}
