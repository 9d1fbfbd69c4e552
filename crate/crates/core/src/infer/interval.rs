//! Interval calculus and the gIOU / aeIOU / gaeIOU metrics.
//!
//! Lengths are endpoint-inclusive and clamp to zero for inverted spans. Pairs are put
//! in canonical order (earlier start first, then earlier end) before hull, overlap
//! and gap are formed, so every metric is symmetric in its arguments.

use std::fmt;

use crate::data::Year;

/// A span of years. May be inverted (`start > end`), in which case it is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: Year,
    pub end: Year,
}

impl Span {
    pub const fn new(start: Year, end: Year) -> Self {
        Self { start, end }
    }

    /// `end - start + 1`, or 0 when inverted.
    pub fn len(&self) -> u32 {
        if self.end < self.start {
            0
        } else {
            (self.end - self.start) as u32 + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, year: Year) -> bool {
        self.start <= year && year <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

fn canonical(a: Span, b: Span) -> (Span, Span) {
    if (b.start, b.end) < (a.start, a.end) {
        (b, a)
    } else {
        (a, b)
    }
}

pub fn hull(a: Span, b: Span) -> Span {
    Span::new(a.start.min(b.start), a.end.max(b.end))
}

/// Shared years; inverted when the spans are disjoint.
pub fn overlap(a: Span, b: Span) -> Span {
    Span::new(a.start.max(b.start), a.end.min(b.end))
}

/// `[end of the first, start of the second]` in canonical order.
pub fn gap(a: Span, b: Span) -> Span {
    let (first, second) = canonical(a, b);
    Span::new(first.end, second.start)
}

/// Length of the gap, taken as 0 whenever the spans overlap.
pub fn gap_len(a: Span, b: Span) -> u32 {
    if overlap(a, b).is_empty() {
        gap(a, b).len()
    } else {
        0
    }
}

pub fn iou(a: Span, b: Span) -> f64 {
    let o = overlap(a, b).len() as f64;
    o / (a.len() as f64 + b.len() as f64 - o)
}

pub fn giou(a: Span, b: Span) -> f64 {
    iou(a, b) - gap_len(a, b) as f64 / hull(a, b).len() as f64
}

pub fn aeiou(a: Span, b: Span) -> f64 {
    let h = hull(a, b).len() as f64;
    let o = overlap(a, b).len();
    if o > 0 {
        o as f64 / h
    } else {
        1.0 / h
    }
}

pub fn gaeiou(a: Span, b: Span) -> f64 {
    let h = hull(a, b).len() as f64;
    let o = overlap(a, b).len();
    if o > 0 {
        o as f64 / h
    } else {
        (gap_len(a, b) as f64).recip() / h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    GIou,
    AeIou,
    GaeIou,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::GIou, Metric::AeIou, Metric::GaeIou];

    pub fn name(self) -> &'static str {
        match self {
            Metric::GIou => "gIOU",
            Metric::AeIou => "aeIOU",
            Metric::GaeIou => "gaeIOU",
        }
    }

    pub fn eval(self, predicted: Span, gold: Span) -> f64 {
        match self {
            Metric::GIou => giou(predicted, gold),
            Metric::AeIou => aeiou(predicted, gold),
            Metric::GaeIou => gaeiou(predicted, gold),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| crate::Error::Config(format!("unknown metric `{s}`")))
    }
}
