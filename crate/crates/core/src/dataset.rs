//! CSV ingestion, evaluation-window slicing and prompt value rendering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-uniform sampling at row {row}: expected step {expected}s, found {found}s")]
    NonUniformSampling { row: usize, expected: i64, found: i64 },
    #[error("non-numeric value {value:?} at row {row}, column `{column}`")]
    NonNumericValue { row: usize, column: String, value: String },
    #[error("unparseable timestamp {value:?} at row {row}")]
    InvalidTimestamp { row: usize, value: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("cannot infer the sampling interval from a single row; set `interval_seconds` in the schema")]
    UnknownInterval,
    #[error("series of length {len} is too short for context {context_len} + horizon {horizon}")]
    SeriesTooShort { len: usize, context_len: usize, horizon: usize },
    #[error("non-finite value {0}")]
    NonFiniteValue(f64),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
}

/// One named, uniformly sampled sequence of timestamped values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    /// Short label used inside prompts, e.g. "Humidity".
    pub label: String,
    /// Human-readable description, e.g. "the total regional humidity".
    pub description: String,
    pub interval_seconds: u64,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(
        id: impl Into<String>,
        interval_seconds: u64,
        timestamps: Vec<i64>,
        values: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        let series = Series {
            label: id.clone(),
            description: id.clone(),
            id,
            interval_seconds,
            timestamps,
            values,
        };
        series.validate()?;
        Ok(series)
    }

    /// Builds a series with timestamps `start, start + interval, ...`.
    pub fn regular(
        id: impl Into<String>,
        start: i64,
        interval_seconds: u64,
        values: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        let timestamps = (0..values.len() as i64)
            .map(|i| start + i * interval_seconds as i64)
            .collect();
        Self::new(id, interval_seconds, timestamps, values)
    }

    pub fn with_description(mut self, label: impl Into<String>, description: impl Into<String>) -> Self {
        self.label = label.into();
        self.description = description.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.values.is_empty() {
            return Err(DatasetError::InvalidSeries(format!("series `{}` is empty", self.id)));
        }
        if self.timestamps.len() != self.values.len() {
            return Err(DatasetError::InvalidSeries(format!(
                "series `{}` has {} timestamps but {} values",
                self.id,
                self.timestamps.len(),
                self.values.len()
            )));
        }
        if self.interval_seconds == 0 {
            return Err(DatasetError::InvalidSeries("interval must be positive".into()));
        }
        for (row, pair) in self.timestamps.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if step != self.interval_seconds as i64 {
                return Err(DatasetError::NonUniformSampling {
                    row: row + 2,
                    expected: self.interval_seconds as i64,
                    found: step,
                });
            }
        }
        if let Some(&bad) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(DatasetError::NonFiniteValue(bad));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub series: Vec<Series>,
    pub feature_count: usize,
    /// Offset applied to timestamps before computing clock-time slots.
    pub utc_offset_seconds: i64,
}

impl Dataset {
    pub fn new(name: impl Into<String>, series: Vec<Series>) -> Result<Self, DatasetError> {
        let first = series
            .first()
            .ok_or_else(|| DatasetError::InvalidSeries("dataset has no series".into()))?;
        for s in &series {
            s.validate()?;
            if s.interval_seconds != first.interval_seconds || s.timestamps != first.timestamps {
                return Err(DatasetError::InvalidSeries(format!(
                    "series `{}` is not aligned with `{}`",
                    s.id, first.id
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            feature_count: series.len(),
            series,
            utc_offset_seconds: 0,
        })
    }

    pub fn series_by_id(&self, id: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.id == id)
    }

    /// Renders the dataset back to CSV with epoch-second timestamps.
    /// `decimals` selects `format_value` rendering; `None` writes the
    /// shortest round-trip representation.
    pub fn to_csv_string(&self, decimals: Option<usize>) -> Result<String, DatasetError> {
        let mut out = String::from("timestamp");
        for s in &self.series {
            out.push(',');
            out.push_str(&s.id);
        }
        out.push('\n');
        let timestamps = &self.series[0].timestamps;
        for (row, ts) in timestamps.iter().enumerate() {
            out.push_str(&ts.to_string());
            for s in &self.series {
                out.push(',');
                match decimals {
                    Some(d) => out.push_str(&format_value(s.values[row], d)?),
                    None => out.push_str(&s.values[row].to_string()),
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Column mapping for [`load_csv`]. Every field is optional: by default the
/// first column holds timestamps and every other column is a feature.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub name: Option<String>,
    pub timestamp_column: Option<String>,
    pub value_columns: Option<Vec<String>>,
    /// Required only for single-row files.
    pub interval_seconds: Option<u64>,
    pub utc_offset_minutes: i64,
    pub labels: BTreeMap<String, String>,
    pub descriptions: BTreeMap<String, String>,
}

impl CsvSchema {
    pub fn from_toml_file(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| DatasetError::Schema(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimestampFormat {
    Epoch,
    Iso,
}

fn parse_timestamp(raw: &str, format: TimestampFormat, row: usize) -> Result<i64, DatasetError> {
    let raw = raw.trim();
    let bad = || DatasetError::InvalidTimestamp { row, value: raw.to_string() };
    match format {
        TimestampFormat::Epoch => raw.parse::<i64>().map_err(|_| bad()),
        TimestampFormat::Iso => NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
            .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
            .map(|dt| dt.and_utc().timestamp())
            .map_err(|_| bad()),
    }
}

/// Loads a CSV file into a [`Dataset`], one series per value column.
///
/// Rows are sorted by timestamp before the sampling check. Row numbers in
/// errors are 1-based data rows (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let default_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&text, schema, &default_name)
}

/// Same as [`load_csv`] but reads from an in-memory string.
pub fn parse_csv(text: &str, schema: &CsvSchema, default_name: &str) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let column_index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };

    let ts_col = match &schema.timestamp_column {
        Some(name) => column_index(name)?,
        None if headers.is_empty() => return Err(DatasetError::EmptyFile),
        None => 0,
    };
    let value_cols: Vec<usize> = match &schema.value_columns {
        Some(names) => names.iter().map(|n| column_index(n)).collect::<Result<_, _>>()?,
        None => (0..headers.len()).filter(|&i| i != ts_col).collect(),
    };
    if value_cols.is_empty() {
        return Err(DatasetError::MissingColumn("<value column>".into()));
    }

    let mut rows: Vec<(i64, Vec<f64>)> = Vec::new();
    let mut format = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let raw_ts = record.get(ts_col).unwrap_or("");
        let fmt = *format.get_or_insert_with(|| {
            if raw_ts.trim().parse::<i64>().is_ok() {
                TimestampFormat::Epoch
            } else {
                TimestampFormat::Iso
            }
        });
        let ts = parse_timestamp(raw_ts, fmt, row)?;
        let mut values = Vec::with_capacity(value_cols.len());
        for &c in &value_cols {
            let raw = record.get(c).unwrap_or("").trim();
            let v = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::NonNumericValue {
                    row,
                    column: headers[c].clone(),
                    value: raw.to_string(),
                })?;
            values.push(v);
        }
        rows.push((ts, values));
    }
    if rows.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    rows.sort_by_key(|(ts, _)| *ts);

    let interval = match (rows.len(), schema.interval_seconds) {
        (_, Some(i)) => i as i64,
        (1, None) => return Err(DatasetError::UnknownInterval),
        _ => rows[1].0 - rows[0].0,
    };
    if interval <= 0 {
        return Err(DatasetError::NonUniformSampling { row: 2, expected: interval, found: interval });
    }
    for (i, pair) in rows.windows(2).enumerate() {
        let step = pair[1].0 - pair[0].0;
        if step != interval {
            return Err(DatasetError::NonUniformSampling { row: i + 2, expected: interval, found: step });
        }
    }

    let timestamps: Vec<i64> = rows.iter().map(|(ts, _)| *ts).collect();
    let series = value_cols
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let id = headers[c].clone();
            let label = schema.labels.get(&id).cloned().unwrap_or_else(|| id.clone());
            let description = schema.descriptions.get(&id).cloned().unwrap_or_else(|| label.clone());
            Series {
                id,
                label,
                description,
                interval_seconds: interval as u64,
                timestamps: timestamps.clone(),
                values: rows.iter().map(|(_, v)| v[j]).collect(),
            }
        })
        .collect();
    let mut dataset = Dataset::new(schema.name.clone().unwrap_or_else(|| default_name.to_string()), series)?;
    dataset.utc_offset_seconds = schema.utc_offset_minutes * 60;
    Ok(dataset)
}

/// A context window and the ground-truth continuation that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub series_id: String,
    pub context_start: usize,
    pub context: Vec<f64>,
    pub horizon: usize,
    pub truth: Vec<f64>,
    pub context_timestamps: Vec<i64>,
    pub interval_seconds: u64,
}

impl EvalWindow {
    pub fn id(&self) -> String {
        format!("{}@{}", self.series_id, self.context_start)
    }

    pub fn context_len(&self) -> usize {
        self.context.len()
    }

    /// Timestamp of the first value after the context.
    pub fn first_forecast_timestamp(&self) -> i64 {
        self.context_timestamps[self.context.len() - 1] + self.interval_seconds as i64
    }
}

/// Slices evaluation windows starting at `0, stride, 2*stride, ...` while the
/// context and its `horizon`-step continuation fit inside the series.
pub fn slice_windows(
    series: &Series,
    context_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<EvalWindow>, DatasetError> {
    if context_len == 0 || horizon == 0 || stride == 0 {
        return Err(DatasetError::InvalidParameter(format!(
            "context_len ({context_len}), horizon ({horizon}) and stride ({stride}) must be >= 1"
        )));
    }
    let span = context_len + horizon;
    if series.len() < span {
        return Err(DatasetError::SeriesTooShort { len: series.len(), context_len, horizon });
    }
    Ok((0..=series.len() - span)
        .step_by(stride)
        .map(|start| {
            let truth_start = start + context_len;
            EvalWindow {
                series_id: series.id.clone(),
                context_start: start,
                context: series.values[start..truth_start].to_vec(),
                horizon,
                truth: series.values[truth_start..truth_start + horizon].to_vec(),
                context_timestamps: series.timestamps[start..truth_start].to_vec(),
                interval_seconds: series.interval_seconds,
            }
        })
        .collect())
}

/// Renders a value for a prompt: at most `max_decimals` fractional digits,
/// rounded half-to-even on the shortest decimal representation of `x`, with
/// trailing zeros stripped and `-0` folded to `0`.
pub fn format_value(x: f64, max_decimals: usize) -> Result<String, DatasetError> {
    if !x.is_finite() {
        return Err(DatasetError::NonFiniteValue(x));
    }
    // Display for f64 is the shortest round-trip decimal and never uses an exponent.
    let repr = format!("{}", x.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes().take(max_decimals)).collect();
    let kept_frac = max_decimals.min(frac_part.len());

    if frac_part.len() > max_decimals {
        let rest = &frac_part.as_bytes()[max_decimals..];
        let first = rest[0];
        let tail_nonzero = rest[1..].iter().any(|&d| d != b'0');
        let last_odd = digits.last().is_some_and(|d| (d - b'0') % 2 == 1);
        let round_up = first > b'5' || (first == b'5' && (tail_nonzero || last_odd));
        if round_up {
            increment_decimal(&mut digits);
        }
    }

    // a carry out of the leading digit grows the integer part
    let int_len = digits.len() - kept_frac;
    let (int_digits, frac_digits) = digits.split_at(int_len);
    let frac = std::str::from_utf8(frac_digits).expect("ascii").trim_end_matches('0');
    let int = std::str::from_utf8(int_digits).expect("ascii");

    let mut out = String::with_capacity(digits.len() + 2);
    let is_zero = int.bytes().all(|d| d == b'0') && frac.is_empty();
    if x.is_sign_negative() && !is_zero {
        out.push('-');
    }
    out.push_str(int);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    Ok(out)
}

fn increment_decimal(digits: &mut Vec<u8>) {
    for d in digits.iter_mut().rev() {
        if *d == b'9' {
            *d = b'0';
        } else {
            *d += 1;
            return;
        }
    }
    digits.insert(0, b'1');
}
