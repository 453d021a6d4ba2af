//! Patch tokenization of a context window.
//!
//! Five strategies are supported: overlapping (`Basic`), `NonOverlapping`
//! (window = stride = horizon), `StrDecompose` (trend/residual pair tokens),
//! `ReverseOrdered` (overlapping, most recent patch first) and `MetaTokens`
//! (values paired with their 10-minute slot of the day).

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_STRIDE: usize = 1;
pub const DEFAULT_TREND_WINDOW: usize = 5;
pub const SLOTS_PER_DAY: u32 = 144;

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("window {window} exceeds context length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window and stride must be >= 1 (window {window}, stride {stride})")]
    InvalidStride { window: usize, stride: usize },
    #[error("trend window {0} must be odd")]
    EvenTrendWindow(usize),
    #[error("invalid clock time {hour:02}:{minute:02}")]
    InvalidClockTime { hour: u32, minute: u32 },
    #[error("length mismatch: {values} values, {timestamps} timestamps")]
    LengthMismatch { values: usize, timestamps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatchStrategy {
    Basic,
    NonOverlapping,
    StrDecompose,
    ReverseOrdered,
    MetaTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchOrder {
    Natural,
    Reversed,
}

/// Per-value annotation carried by decomposed or slot-tagged patches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TokenMeta {
    Slot(u32),
    TrendResidual { trend: f64, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub values: Vec<f64>,
    pub meta: Option<Vec<TokenMeta>>,
}

impl Patch {
    pub fn new(values: Vec<f64>) -> Self {
        Patch { values, meta: None }
    }
}

impl From<Vec<f64>> for Patch {
    fn from(values: Vec<f64>) -> Self {
        Patch::new(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSet {
    pub strategy: PatchStrategy,
    pub window: usize,
    pub stride: usize,
    pub patches: Vec<Patch>,
    pub order: PatchOrder,
}

impl PatchSet {
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.patches.iter().map(|p| p.values.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

fn check_window(len: usize, window: usize, stride: usize) -> Result<(), PatchError> {
    if window == 0 || stride == 0 {
        return Err(PatchError::InvalidStride { window, stride });
    }
    if window > len {
        return Err(PatchError::WindowTooLarge { window, len });
    }
    Ok(())
}

fn offsets(len: usize, window: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=len - window).step_by(stride)
}

/// Patches of `window` values at offsets `0, stride, 2*stride, ...`.
pub fn overlapping_patches(context: &[f64], window: usize, stride: usize) -> Result<PatchSet, PatchError> {
    check_window(context.len(), window, stride)?;
    Ok(PatchSet {
        strategy: PatchStrategy::Basic,
        window,
        stride,
        patches: offsets(context.len(), window, stride)
            .map(|i| Patch::new(context[i..i + window].to_vec()))
            .collect(),
        order: PatchOrder::Natural,
    })
}

/// Reverses the patch list so the most recent patch comes first. Applying it
/// twice restores the original order.
pub fn reverse_patches(ps: &PatchSet) -> PatchSet {
    let mut patches = ps.patches.clone();
    patches.reverse();
    let (order, strategy) = match ps.order {
        PatchOrder::Natural => (
            PatchOrder::Reversed,
            match ps.strategy {
                PatchStrategy::Basic => PatchStrategy::ReverseOrdered,
                other => other,
            },
        ),
        PatchOrder::Reversed => (
            PatchOrder::Natural,
            match ps.strategy {
                PatchStrategy::ReverseOrdered => PatchStrategy::Basic,
                other => other,
            },
        ),
    };
    PatchSet { strategy, window: ps.window, stride: ps.stride, patches, order }
}

/// Disjoint patches of length `horizon` tiling the most recent values. When
/// the context length is not a multiple of `horizon` the oldest
/// `len % horizon` values are dropped.
pub fn nonoverlapping_patches(context: &[f64], horizon: usize) -> Result<PatchSet, PatchError> {
    check_window(context.len(), horizon, horizon)?;
    let skip = context.len() % horizon;
    Ok(PatchSet {
        strategy: PatchStrategy::NonOverlapping,
        window: horizon,
        stride: horizon,
        patches: context[skip..].chunks_exact(horizon).map(|c| Patch::new(c.to_vec())).collect(),
        order: PatchOrder::Natural,
    })
}

/// Trend/residual split of a context, with `trend[t] + residual[t] == series[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub residual: Vec<f64>,
    pub trend_window: usize,
}

/// Centered moving-average trend with the window clipped at both edges;
/// the residual is the series minus the trend.
pub fn str_decompose(context: &[f64], trend_window: usize) -> Result<Decomposition, PatchError> {
    if trend_window.is_multiple_of(2) {
        return Err(PatchError::EvenTrendWindow(trend_window));
    }
    check_window(context.len(), trend_window, 1)?;
    let half = trend_window / 2;
    let n = context.len();
    let mut trend = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    for (t, &x) in context.iter().enumerate() {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(n - 1);
        let avg = context[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        let (tr, r) = exact_split(x, avg);
        trend.push(tr);
        residual.push(r);
    }
    Ok(Decomposition { trend, residual, trend_window })
}

/// Returns `(trend, x - trend)` such that the pair sums back to `x` in
/// floating point. When plain subtraction loses bits, the trend is snapped to
/// the ulp grid of `x`, which makes the subtraction exact whenever the
/// difference stays below the binade of `x`.
fn exact_split(x: f64, trend: f64) -> (f64, f64) {
    let residual = x - trend;
    if trend + residual == x || x == 0.0 {
        return (trend, residual);
    }
    let ulp = f64::from_bits(x.abs().to_bits() + 1) - x.abs();
    let snapped = (trend / ulp).round() * ulp;
    let snapped_residual = x - snapped;
    if snapped.is_finite() && snapped + snapped_residual == x {
        (snapped, snapped_residual)
    } else {
        (trend, residual)
    }
}

/// `(trend, residual)` pair per time step, in natural order.
pub fn composite_tokens(d: &Decomposition) -> Vec<(f64, f64)> {
    d.trend.iter().copied().zip(d.residual.iter().copied()).collect()
}

/// 10-minute slot of the day: `floor((60 * hour + minute) / 10)`.
pub fn slot_index(hour: u32, minute: u32) -> Result<u32, PatchError> {
    if hour > 23 || minute > 59 {
        return Err(PatchError::InvalidClockTime { hour, minute });
    }
    Ok((60 * hour + minute) / 10)
}

/// Slot of an epoch timestamp after applying `utc_offset_seconds`.
pub fn slot_of_timestamp(timestamp: i64, utc_offset_seconds: i64) -> u32 {
    let seconds_of_day = (timestamp + utc_offset_seconds).rem_euclid(86_400) as u32;
    (seconds_of_day / 60) / 10
}

/// Pairs each value with the slot of its timestamp.
pub fn meta_tokens(
    context: &[f64],
    timestamps: &[i64],
    utc_offset_seconds: i64,
) -> Result<Vec<(f64, u32)>, PatchError> {
    if context.len() != timestamps.len() {
        return Err(PatchError::LengthMismatch { values: context.len(), timestamps: timestamps.len() });
    }
    Ok(context
        .iter()
        .zip(timestamps)
        .map(|(&v, &ts)| (v, slot_of_timestamp(ts, utc_offset_seconds)))
        .collect())
}

fn windowed_with_meta(
    strategy: PatchStrategy,
    context: &[f64],
    meta: &[TokenMeta],
    window: usize,
    stride: usize,
) -> Result<PatchSet, PatchError> {
    check_window(context.len(), window, stride)?;
    Ok(PatchSet {
        strategy,
        window,
        stride,
        patches: offsets(context.len(), window, stride)
            .map(|i| Patch {
                values: context[i..i + window].to_vec(),
                meta: Some(meta[i..i + window].to_vec()),
            })
            .collect(),
        order: PatchOrder::Natural,
    })
}

/// Overlapping patches of `(trend, residual)` composite tokens.
pub fn str_patches(
    context: &[f64],
    window: usize,
    stride: usize,
    trend_window: usize,
) -> Result<PatchSet, PatchError> {
    let d = str_decompose(context, trend_window)?;
    let meta: Vec<TokenMeta> = composite_tokens(&d)
        .into_iter()
        .map(|(trend, residual)| TokenMeta::TrendResidual { trend, residual })
        .collect();
    windowed_with_meta(PatchStrategy::StrDecompose, context, &meta, window, stride)
}

/// Overlapping patches of `(value, slot)` tokens.
pub fn meta_patches(
    context: &[f64],
    timestamps: &[i64],
    window: usize,
    stride: usize,
    utc_offset_seconds: i64,
) -> Result<PatchSet, PatchError> {
    let meta: Vec<TokenMeta> = meta_tokens(context, timestamps, utc_offset_seconds)?
        .into_iter()
        .map(|(_, slot)| TokenMeta::Slot(slot))
        .collect();
    windowed_with_meta(PatchStrategy::MetaTokens, context, &meta, window, stride)
}
