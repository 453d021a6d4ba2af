//! Extraction of numeric forecasts and echoed patches from raw LLM text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patching::{Patch, PatchSet};

pub const PREDICTION_MARKER: &str = "Prediction:";
pub const PATCHES_MARKER: &str = "Patches:";

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParseError {
    #[error("no bracketed numeric list found")]
    NoListFound,
    #[error("expected {expected} values, found {found}")]
    WrongCount { found: usize, expected: usize },
    #[error("non-numeric element {0:?}")]
    NonNumericElement(String),
    #[error("malformed patch list: {0}")]
    MalformedPatchList(String),
    #[error("horizon must be >= 1")]
    InvalidHorizon,
}

/// A parsed forecast and, when the model echoed them, its patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub values: Vec<f64>,
    pub echoed_patches: Option<Vec<Patch>>,
    pub raw_text: String,
    /// Set when lenient parsing truncated or padded the list.
    pub repaired: bool,
}

/// A bracket group `[ ... ]` located in the text, by byte offsets of the
/// brackets themselves.
#[derive(Debug, Clone, Copy)]
struct Group {
    open: usize,
    close: usize,
    nested: bool,
}

/// Top-level bracket groups of `text`. Returns `Err(offset)` on an unclosed
/// group.
fn top_level_groups(text: &str) -> Result<Vec<Group>, usize> {
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut open = 0;
    let mut nested = false;
    for (i, c) in text.char_indices() {
        match c {
            '[' => {
                if depth == 0 {
                    open = i;
                    nested = false;
                } else {
                    nested = true;
                }
                depth += 1;
            }
            ']' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    groups.push(Group { open, close: i, nested });
                }
            }
            _ => {}
        }
    }
    if depth > 0 {
        return Err(open);
    }
    Ok(groups)
}

fn parse_number_list(inner: &str) -> Result<Vec<f64>, ParseError> {
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|raw| {
            let item = raw.trim();
            item.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError::NonNumericElement(item.to_string()))
        })
        .collect()
}

fn locate_prediction(text: &str) -> Result<Vec<f64>, ParseError> {
    if let Some(pos) = text.rfind(PREDICTION_MARKER) {
        let after = &text[pos + PREDICTION_MARKER.len()..];
        let groups = top_level_groups(after).map_err(|_| ParseError::NoListFound)?;
        let first = groups.first().ok_or(ParseError::NoListFound)?;
        let inner = &after[first.open + 1..first.close];
        if first.nested {
            return Err(ParseError::NonNumericElement(inner.trim().to_string()));
        }
        return parse_number_list(inner);
    }
    let groups = top_level_groups(text).map_err(|_| ParseError::NoListFound)?;
    let last = groups.iter().rev().find(|g| !g.nested).ok_or(ParseError::NoListFound)?;
    parse_number_list(&text[last.open + 1..last.close])
}

/// Extracts exactly `horizon` values: the list after the last `Prediction:`
/// marker, otherwise the last flat top-level bracketed list.
pub fn parse_prediction(text: &str, horizon: usize) -> Result<Vec<f64>, ParseError> {
    if horizon == 0 {
        return Err(ParseError::InvalidHorizon);
    }
    let values = locate_prediction(text)?;
    if values.len() != horizon {
        return Err(ParseError::WrongCount { found: values.len(), expected: horizon });
    }
    Ok(values)
}

/// Like [`parse_prediction`] but truncates long lists and pads short
/// non-empty lists with their last value. The flag reports a repair.
pub fn parse_prediction_lenient(text: &str, horizon: usize) -> Result<(Vec<f64>, bool), ParseError> {
    if horizon == 0 {
        return Err(ParseError::InvalidHorizon);
    }
    let mut values = locate_prediction(text)?;
    let repaired = values.len() != horizon;
    match values.last().copied() {
        None => return Err(ParseError::WrongCount { found: 0, expected: horizon }),
        Some(last) => values.resize(horizon, last),
    }
    Ok((values, repaired))
}

/// Parses the list of patches after `Patches:`. Accepts either one outer list
/// of lists or a run of flat lists (one per patch). `Ok(None)` when the
/// marker is absent.
pub fn parse_patches(text: &str) -> Result<Option<Vec<Patch>>, ParseError> {
    let Some(pos) = text.rfind(PATCHES_MARKER) else {
        return Ok(None);
    };
    let region = &text[pos + PATCHES_MARKER.len()..];
    let region = match region.find(PREDICTION_MARKER) {
        Some(end) => &region[..end],
        None => region,
    };
    let malformed = |why: &str| ParseError::MalformedPatchList(why.to_string());
    let groups = top_level_groups(region).map_err(|_| malformed("unclosed bracket"))?;
    let inner_lists: Vec<&str> = match groups.as_slice() {
        [] => return Err(malformed("no list after marker")),
        [outer] if outer.nested => {
            let body = &region[outer.open + 1..outer.close];
            let inner = top_level_groups(body).map_err(|_| malformed("unclosed bracket"))?;
            if inner.iter().any(|g| g.nested) {
                return Err(malformed("patches nested too deeply"));
            }
            let mut gaps = Vec::with_capacity(inner.len() + 1);
            let mut prev = 0;
            for g in &inner {
                gaps.push(&body[prev..g.open]);
                prev = g.close + 1;
            }
            gaps.push(&body[prev..]);
            if gaps.iter().any(|gap| gap.chars().any(|c| !(c.is_whitespace() || c == ','))) {
                return Err(malformed("unexpected text between patches"));
            }
            inner.iter().map(|g| &body[g.open + 1..g.close]).collect()
        }
        flat if flat.iter().all(|g| !g.nested) => flat.iter().map(|g| &region[g.open + 1..g.close]).collect(),
        _ => return Err(malformed("mixed flat and nested lists")),
    };
    let patches = inner_lists
        .into_iter()
        .map(|inner| match parse_number_list(inner) {
            Ok(values) if !values.is_empty() => Ok(Patch::new(values)),
            Ok(_) => Err(malformed("empty patch")),
            Err(e) => Err(ParseError::MalformedPatchList(e.to_string())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(patches))
}

/// Parses both the forecast and any echoed patches. A malformed patch echo
/// does not fail the forecast; it is recorded as absent.
pub fn parse_forecast(text: &str, horizon: usize, lenient: bool) -> Result<Forecast, ParseError> {
    let (values, repaired) = if lenient {
        parse_prediction_lenient(text, horizon)?
    } else {
        (parse_prediction(text, horizon)?, false)
    };
    Ok(Forecast {
        values,
        echoed_patches: parse_patches(text).ok().flatten(),
        raw_text: text.to_string(),
        repaired,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    /// Share of positions whose echoed patch matches the true patch within
    /// tolerance; the denominator is the longer of the two lists.
    pub exact_fraction: f64,
    /// Mean absolute deviation over aligned elements; `None` when nothing aligns.
    pub mean_abs_dev: Option<f64>,
}

pub const DEFAULT_FIDELITY_TOL: f64 = 1e-4;

pub fn patch_fidelity(echoed: &[Patch], truth: &PatchSet, tol: f64) -> Fidelity {
    let positions = echoed.len().max(truth.patches.len());
    if echoed.is_empty() || positions == 0 {
        return Fidelity { exact_fraction: 0.0, mean_abs_dev: None };
    }
    let mut exact = 0usize;
    let mut dev_sum = 0.0;
    let mut dev_n = 0usize;
    for (e, t) in echoed.iter().zip(&truth.patches) {
        let mut all_close = e.values.len() == t.values.len();
        for (a, b) in e.values.iter().zip(&t.values) {
            let d = (a - b).abs();
            dev_sum += d;
            dev_n += 1;
            all_close &= d <= tol;
        }
        if all_close {
            exact += 1;
        }
    }
    Fidelity {
        exact_fraction: exact as f64 / positions as f64,
        mean_abs_dev: (dev_n > 0).then(|| dev_sum / dev_n as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patching::{overlapping_patches, reverse_patches};

    #[test]
    fn prediction_after_marker() {
        let text = "Patches:\n[[2,3,4],[1,2,3]]\nPrediction:\n[0.1, 0.2, 0.3]";
        assert_eq!(parse_prediction(text, 3), Ok(vec![0.1, 0.2, 0.3]));
        assert_eq!(parse_prediction("[7.5]", 1), Ok(vec![7.5]));
        assert_eq!(parse_prediction("Prediction: [1, 2]", 3), Err(ParseError::WrongCount { found: 2, expected: 3 }));
    }

    #[test]
    fn last_list_wins_without_marker() {
        let text = "Sequence: [1, 2, 3] and my forecast is [4, 5, 6].";
        assert_eq!(parse_prediction(text, 3), Ok(vec![4.0, 5.0, 6.0]));
        // The echoed patch block is nested, so the flat list before it wins.
        assert_eq!(parse_prediction("[9] then [[1,2],[3,4]]", 1), Ok(vec![9.0]));
        // Last marker wins.
        assert_eq!(parse_prediction("Prediction: [1]\nPrediction: [2]", 1), Ok(vec![2.0]));
    }

    #[test]
    fn tolerated_formats() {
        assert_eq!(parse_prediction("  \n[ 1.5e-3 ,2,\n -3.25 ]. \n", 3), Ok(vec![0.0015, 2.0, -3.25]));
        assert_eq!(parse_prediction("Here you go:\nPrediction:\n[1,2]\nThanks!", 2), Ok(vec![1.0, 2.0]));
    }

    #[test]
    fn failure_modes() {
        assert_eq!(parse_prediction("no numbers here", 1), Err(ParseError::NoListFound));
        assert_eq!(parse_prediction("[[1, 2]]", 2), Err(ParseError::NoListFound));
        assert_eq!(parse_prediction("[1, two]", 2), Err(ParseError::NonNumericElement("two".into())));
        assert_eq!(parse_prediction("[1, NaN]", 2), Err(ParseError::NonNumericElement("NaN".into())));
        assert_eq!(parse_prediction("Prediction: [1, 2", 2), Err(ParseError::NoListFound));
        assert_eq!(parse_prediction("[1]", 0), Err(ParseError::InvalidHorizon));
    }

    #[test]
    fn lenient_repairs() {
        assert_eq!(parse_prediction_lenient("[1, 2, 3, 4]", 2), Ok((vec![1.0, 2.0], true)));
        assert_eq!(parse_prediction_lenient("[1, 2]", 4), Ok((vec![1.0, 2.0, 2.0, 2.0], true)));
        assert_eq!(parse_prediction_lenient("[1, 2]", 2), Ok((vec![1.0, 2.0], false)));
        assert!(matches!(parse_prediction_lenient("[]", 2), Err(ParseError::WrongCount { found: 0, .. })));
    }

    #[test]
    fn patches() {
        let text = "Patches:\n[[2,3,4],[1,2,3]]\nPrediction:\n[5]";
        let p = parse_patches(text).unwrap().unwrap();
        assert_eq!(p, vec![Patch::new(vec![2.0, 3.0, 4.0]), Patch::new(vec![1.0, 2.0, 3.0])]);
        assert_eq!(parse_patches("Prediction: [1]"), Ok(None));
        assert!(matches!(parse_patches("Patches:\n[[1,2,"), Err(ParseError::MalformedPatchList(_))));
        assert!(matches!(parse_patches("Patches: none"), Err(ParseError::MalformedPatchList(_))));
        assert!(matches!(parse_patches("Patches: [[1, x]]"), Err(ParseError::MalformedPatchList(_))));

        let lines = "Patches:\n[8.35, 8.36, 8.32]\n[8.45, 8.35, 8.25]\nPrediction:\n[7.9]";
        assert_eq!(parse_patches(lines).unwrap().unwrap().len(), 2);
        let multiline = "Patches:\n[[3, 4],\n ... ,\n[1, 2]]";
        assert!(parse_patches(multiline).is_err());
    }

    #[test]
    fn forecast_keeps_raw_text_and_patches() {
        let text = "Patches:\n[[2,3,4],[1,2,3]]\nPrediction:\n[5]";
        let f = parse_forecast(text, 1, false).unwrap();
        assert_eq!(f.values, vec![5.0]);
        assert_eq!(f.echoed_patches.unwrap().len(), 2);
        assert_eq!(f.raw_text, text);
        let f = parse_forecast("Patches: [[1,\nPrediction: [5]", 1, false).unwrap();
        assert!(f.echoed_patches.is_none());
    }

    #[test]
    fn fidelity() {
        let truth = reverse_patches(&overlapping_patches(&[1.0, 2.0, 3.0, 4.0], 3, 1).unwrap());
        let f = patch_fidelity(&truth.patches, &truth, DEFAULT_FIDELITY_TOL);
        assert_eq!(f.exact_fraction, 1.0);
        assert_eq!(f.mean_abs_dev, Some(0.0));

        let f = patch_fidelity(&[], &truth, DEFAULT_FIDELITY_TOL);
        assert_eq!(f.exact_fraction, 0.0);
        assert_eq!(f.mean_abs_dev, None);

        // Second patch [1,2,3] perturbed to [1,2.5,3]: one exact of two, and
        // the deviation over 6 aligned elements is 0.5 / 6.
        let echoed = vec![Patch::new(vec![2.0, 3.0, 4.0]), Patch::new(vec![1.0, 2.5, 3.0])];
        let f = patch_fidelity(&echoed, &truth, DEFAULT_FIDELITY_TOL);
        assert_eq!(f.exact_fraction, 0.5);
        assert!((f.mean_abs_dev.unwrap() - 0.5 / 6.0).abs() < 1e-15);

        // Missing and extra patches count against the score.
        let f = patch_fidelity(&echoed[..1], &truth, DEFAULT_FIDELITY_TOL);
        assert_eq!(f.exact_fraction, 0.5);
        let mut extra = truth.patches.clone();
        extra.push(Patch::new(vec![9.0]));
        assert!((patch_fidelity(&extra, &truth, DEFAULT_FIDELITY_TOL).exact_fraction - 2.0 / 3.0).abs() < 1e-15);
    }
}
