#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use tsf_core::dataset::{load_csv, slice_windows, CsvSchema, Dataset, EvalWindow, Series};
use tsf_core::format_value;

/// 2016-01-01T00:00:00Z
pub const START: i64 = 1_451_606_400;
pub const TEN_MINUTES: u64 = 600;

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// 600 rows of 10-minute humidity and temperature readings.
pub fn humidity_dataset() -> Dataset {
    let schema = CsvSchema::from_toml_file(&data_dir().join("weather.schema.toml")).unwrap();
    load_csv(data_dir().join("weather.csv"), &schema).unwrap()
}

pub fn constant_dataset(len: usize, value: f64) -> Dataset {
    let s = Series::regular("flat", START, TEN_MINUTES, vec![value; len])
        .unwrap()
        .with_description("Level", "a constant level");
    Dataset::new("constant", vec![s]).unwrap()
}

pub fn linear_dataset(len: usize, intercept: f64, slope: f64) -> Dataset {
    let s = Series::regular("line", START, TEN_MINUTES, (0..len).map(|i| intercept + slope * i as f64).collect())
        .unwrap()
        .with_description("Level", "a linearly increasing level");
    Dataset::new("linear", vec![s]).unwrap()
}

/// The window every golden prompt is built from: 96 values of `rh`
/// starting at index 144 (one day in), horizon 3.
pub fn golden_window(dataset: &Dataset) -> EvalWindow {
    let rh = dataset.series_by_id("rh").unwrap();
    slice_windows(rh, 96, 3, 1).unwrap().remove(144)
}

/// Reads the context and horizon back out of a user prompt.
pub fn read_prompt(user: &str) -> (Vec<f64>, usize) {
    let start = user.rfind("Sequence: <").unwrap() + "Sequence: <".len();
    let end = start + user[start..].find('>').unwrap();
    let values = user[start..end].split(", ").map(|v| v.parse().unwrap()).collect();
    let tail = &user[end..];
    let h = tail["Predict the next ".len() + tail.find("Predict the next ").unwrap()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    (values, h)
}

fn render(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| format_value(v, 4).unwrap()).collect();
    format!("[{}]", items.join(", "))
}

/// A chat-completion answer shaped like a real model reply: echoed patches
/// (reversed, window 3) followed by a damped-trend prediction.
pub fn live_shaped_answer(context: &[f64], horizon: usize) -> String {
    let n = context.len();
    let mut patches: Vec<String> = context.windows(3).map(render).collect();
    patches.reverse();
    let last = context[n - 1];
    let drift = (context[n - 1] - context[n.saturating_sub(6)]) / 5.0;
    let pred: Vec<f64> = (1..=horizon).map(|i| last + drift * 0.5 * i as f64).collect();
    format!("Patches:\n[{}]\nPrediction:\n{}", patches.join(", "), render(&pred))
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

fn json_unescape_user(body: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    v["messages"][1]["content"].as_str().unwrap().to_string()
}

/// Local OpenAI-compatible server. Replies with [`live_shaped_answer`] and
/// usage counts derived from the request size. The first `fail_first`
/// requests get HTTP 429.
pub struct ChatServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl ChatServer {
    pub fn start(fail_first: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let counter = counter.clone();
                std::thread::spawn(move || handle(stream, &counter, fail_first));
            }
        });
        ChatServer { url, requests }
    }
}

fn handle(stream: TcpStream, counter: &AtomicUsize, fail_first: usize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if line == "\r\n" {
            break;
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let n = counter.fetch_add(1, Ordering::SeqCst);
    let (status, payload) = if n < fail_first {
        (429, "{\"error\":\"rate limited\"}".to_string())
    } else {
        let body = String::from_utf8(body).unwrap();
        let user = json_unescape_user(&body);
        let (context, horizon) = read_prompt(&user);
        let text = live_shaped_answer(&context, horizon);
        let prompt_tokens = body.len() / 4;
        let completion_tokens = text.len() / 4 + 1;
        (
            200,
            format!(
                "{{\"choices\":[{{\"message\":{{\"role\":\"assistant\",\"content\":\"{}\"}}}}],\"usage\":{{\"prompt_tokens\":{prompt_tokens},\"completion_tokens\":{completion_tokens}}}}}",
                json_escape(&text)
            ),
        )
    };
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

pub fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Bundles for every strategy on the golden window, with default options and
/// the built-in templates.
pub fn golden_bundles() -> Vec<(tsf_core::Strategy, tsf_core::PromptBundle)> {
    use tsf_core::neighbors::{build_pool, top_k, PoolOptions, DEFAULT_K};
    use tsf_core::prompting::{assemble, PromptOptions, SeriesInfo};
    let ds = humidity_dataset();
    let window = golden_window(&ds);
    let info = SeriesInfo::from_series(ds.series_by_id("rh").unwrap(), ds.utc_offset_seconds);
    let templates = tsf_core::TemplateSet::builtin();
    tsf_core::Strategy::ALL
        .into_iter()
        .map(|s| {
            let neighbors = s.needs_neighbors().then(|| {
                let pool = build_pool(&ds, &window, &PoolOptions::default()).unwrap();
                top_k(&window, &pool, DEFAULT_K, false).unwrap()
            });
            let b = assemble(s, &window, &info, &PromptOptions::default(), &templates, neighbors.as_ref()).unwrap();
            (s, b)
        })
        .collect()
}

/// The on-disk form of a golden bundle.
pub fn golden_text(b: &tsf_core::PromptBundle) -> String {
    format!(
        "strategy: {}\nwindow: {}\nhorizon: {}\ntemplate_version: {}\nhash: {}\n=== system ===\n{}\n=== user ===\n{}\n",
        b.strategy,
        b.window_id,
        b.horizon,
        b.template_version,
        b.content_hash(),
        b.system,
        b.user
    )
}
