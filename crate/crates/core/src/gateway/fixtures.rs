use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::prompting::PromptBundle;

use super::{Backend, GatewayError, LlmResponse, TokenSource};

/// One recorded response, keyed by the bundle content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub hash: String,
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_seconds: f64,
}

fn fixture_err(path: &Path, message: impl ToString) -> GatewayError {
    GatewayError::Fixture { path: path.display().to_string(), message: message.to_string() }
}

/// Reads a JSON-lines fixture file into a map from hash to record.
pub fn read_fixtures(path: &Path) -> Result<BTreeMap<String, FixtureRecord>, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| fixture_err(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: FixtureRecord =
            serde_json::from_str(line).map_err(|e| fixture_err(path, format!("line {}: {e}", i + 1)))?;
        map.insert(rec.hash.clone(), rec);
    }
    Ok(map)
}

/// Writes records as JSON lines sorted by hash.
pub fn write_fixtures<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a FixtureRecord>,
) -> Result<(), GatewayError> {
    let mut sorted: Vec<&FixtureRecord> = records.into_iter().collect();
    sorted.sort_by(|a, b| a.hash.cmp(&b.hash));
    let mut out = Vec::new();
    for rec in sorted {
        serde_json::to_writer(&mut out, rec).map_err(|e| fixture_err(path, e))?;
        out.push(b'\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| fixture_err(path, e))?;
    }
    std::fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(|e| fixture_err(path, e))
}

/// Serves recorded responses; any unseen bundle is a hard error.
pub struct ReplayBackend {
    records: BTreeMap<String, FixtureRecord>,
}

impl ReplayBackend {
    pub fn new(records: BTreeMap<String, FixtureRecord>) -> Self {
        ReplayBackend { records }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(read_fixtures(path)?))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> String {
        "replay".into()
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, GatewayError> {
        let hash = bundle.content_hash();
        let rec = self.records.get(&hash).ok_or_else(|| GatewayError::ReplayMiss {
            hash: hash.clone(),
            window_id: bundle.window_id.clone(),
            strategy: bundle.strategy.name().into(),
            horizon: bundle.horizon,
        })?;
        Ok(LlmResponse {
            text: rec.text.clone(),
            input_tokens: rec.input_tokens,
            output_tokens: rec.output_tokens,
            latency_seconds: rec.latency_seconds,
            backend_id: self.id(),
            token_source: TokenSource::Reported,
        })
    }
}

/// Wraps a backend and keeps every successful response for later writing.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    records: Mutex<BTreeMap<String, FixtureRecord>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        RecordingBackend { inner, records: Mutex::new(BTreeMap::new()) }
    }

    pub fn records(&self) -> Vec<FixtureRecord> {
        self.records.lock().expect("recorder lock").values().cloned().collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), GatewayError> {
        write_fixtures(path, &self.records())
    }
}

impl Backend for RecordingBackend {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, GatewayError> {
        let resp = self.inner.complete(bundle)?;
        let rec = FixtureRecord {
            hash: bundle.content_hash(),
            text: resp.text.clone(),
            input_tokens: resp.input_tokens,
            output_tokens: resp.output_tokens,
            latency_seconds: resp.latency_seconds,
        };
        self.records.lock().expect("recorder lock").insert(rec.hash.clone(), rec);
        Ok(resp)
    }
}
