//! From per-year scores to ranked intervals, interval metrics, and triple
//! classification.

pub mod classify;
pub mod decode;
pub mod eval;
pub mod interval;

pub use classify::{
    classification_sets, triple_classification, ClassificationOutcome, ClassificationSets, ClassifierConfig,
    FitReport, Mlp,
};
pub use decode::{greedy_coalesce, PredictedInterval, YearDistribution, YearScorer};
pub use eval::{
    best_at_k, evaluate, predict, predictions_from_tsv, predictions_to_tsv, FactPrediction, MetricRow,
    MetricTable, DEFAULT_THETA,
};
pub use interval::{aeiou, gaeiou, gap, gap_len, giou, hull, iou, overlap, Metric, Span};
