//! Nearest-neighbor retrieval of past context windows by Euclidean distance.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, EvalWindow};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum NeighborError {
    #[error("no past windows available for target {0}")]
    EmptyPool(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWindow {
    pub series_id: String,
    pub start_index: usize,
    pub values: Vec<f64>,
    /// Values following the window, present when the pool was built with a
    /// continuation length.
    pub continuation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub window: CandidateWindow,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub k: usize,
    pub entries: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolOptions {
    pub candidate_stride: usize,
    pub same_series_only: bool,
    /// Number of values after each candidate that must also lie before the
    /// target context; they are attached as the candidate's continuation.
    pub continuation: usize,
}

impl Default for PoolOptions {
    fn default() -> Self {
        PoolOptions { candidate_stride: 1, same_series_only: false, continuation: 0 }
    }
}

/// Collects every length-L window (L = target context length) that ends
/// before the target context begins, across all series of the dataset unless
/// `same_series_only` is set.
pub fn build_pool(
    dataset: &Dataset,
    target: &EvalWindow,
    opts: &PoolOptions,
) -> Result<Vec<CandidateWindow>, NeighborError> {
    if opts.candidate_stride == 0 {
        return Err(NeighborError::InvalidParameter("candidate_stride must be >= 1".into()));
    }
    let len = target.context.len();
    let span = len + opts.continuation;
    let target_first = target.context_timestamps[0];
    let mut pool = Vec::new();
    for series in &dataset.series {
        if opts.same_series_only && series.id != target.series_id {
            continue;
        }
        // The candidate span must end strictly before the target's first
        // context timestamp.
        let past = series.timestamps.partition_point(|&ts| ts < target_first);
        if past < span {
            continue;
        }
        for start in (0..=past - span).step_by(opts.candidate_stride) {
            pool.push(CandidateWindow {
                series_id: series.id.clone(),
                start_index: start,
                values: series.values[start..start + len].to_vec(),
                continuation: (opts.continuation > 0)
                    .then(|| series.values[start + len..start + span].to_vec()),
            });
        }
    }
    if pool.is_empty() {
        return Err(NeighborError::EmptyPool(target.id()));
    }
    Ok(pool)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64, NeighborError> {
    if a.len() != b.len() {
        return Err(NeighborError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Per-window z-normalization; constant windows map to zeros.
pub fn znormalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Total order used for ranking: distance, then series id, then start index.
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.window.series_id.cmp(&b.window.series_id))
        .then_with(|| a.window.start_index.cmp(&b.window.start_index))
}

/// The `k` candidates closest to the target context, by exhaustive scan.
pub fn top_k(
    target: &EvalWindow,
    pool: &[CandidateWindow],
    k: usize,
    znorm: bool,
) -> Result<NeighborSet, NeighborError> {
    if k == 0 {
        return Err(NeighborError::InvalidParameter("k must be >= 1".into()));
    }
    if pool.is_empty() {
        return Err(NeighborError::EmptyPool(target.id()));
    }
    let query = if znorm { znormalize(&target.context) } else { target.context.clone() };
    let mut scored: Vec<Neighbor> = pool
        .par_iter()
        .map(|c| {
            let distance = if znorm {
                euclidean(&query, &znormalize(&c.values))
            } else {
                euclidean(&query, &c.values)
            }?;
            Ok(Neighbor { window: c.clone(), distance })
        })
        .collect::<Result<_, NeighborError>>()?;
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, neighbor_order);
        scored.truncate(k);
    }
    scored.sort_by(neighbor_order);
    Ok(NeighborSet { k, entries: scored })
}
