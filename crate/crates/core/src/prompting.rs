//! System/user prompt assembly from versioned templates.
//!
//! Templates are plain UTF-8 text with `{placeholder}` markers. The default
//! set is compiled in from `templates/`; a directory with the same file names
//! and a `VERSION` file can replace it at run time.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{format_value, DatasetError, EvalWindow};
use crate::neighbors::NeighborSet;
use crate::patching::{self, PatchError, PatchSet};

pub const VALUE_DECIMALS: usize = 4;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unbound placeholder {{{0}}}")]
    UnboundPlaceholder(String),
    #[error("strategy {0} requires a neighbor set")]
    MissingNeighbors(Strategy),
    #[error("strategy {0} does not take neighbors")]
    UnexpectedNeighbors(Strategy),
    #[error("neighbor set is empty")]
    EmptyNeighborSet,
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("template io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Value(#[from] DatasetError),
    #[error(transparent)]
    Patch(#[from] PatchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Zeroshot,
    PatchInstruct,
    Neighs,
    PatchInstructNeighs,
    BasicPI,
    NonOverlappingPI,
    StrDecomposePI,
    ReverseOrderedPI,
    MetaTokensPI,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Zeroshot,
        Strategy::PatchInstruct,
        Strategy::Neighs,
        Strategy::PatchInstructNeighs,
        Strategy::BasicPI,
        Strategy::NonOverlappingPI,
        Strategy::StrDecomposePI,
        Strategy::ReverseOrderedPI,
        Strategy::MetaTokensPI,
    ];

    /// Name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Zeroshot => "zeroshot",
            Strategy::PatchInstruct => "patch-instruct",
            Strategy::Neighs => "neighs",
            Strategy::PatchInstructNeighs => "patch-neighs",
            Strategy::BasicPI => "basic-patch",
            Strategy::NonOverlappingPI => "nonoverlap-patch",
            Strategy::StrDecomposePI => "str-patch",
            Strategy::ReverseOrderedPI => "reverse-patch",
            Strategy::MetaTokensPI => "meta-patch",
        }
    }

    pub fn template_file(self) -> &'static str {
        match self {
            Strategy::Zeroshot => "zeroshot.txt",
            Strategy::PatchInstruct => "patch_instruct.txt",
            Strategy::Neighs => "neighs.txt",
            Strategy::PatchInstructNeighs => "patch_instruct_neighs.txt",
            Strategy::BasicPI => "basic_patch.txt",
            Strategy::NonOverlappingPI => "nonoverlap_patch.txt",
            Strategy::StrDecomposePI => "str_patch.txt",
            Strategy::ReverseOrderedPI => "reverse_patch.txt",
            Strategy::MetaTokensPI => "meta_patch.txt",
        }
    }

    pub fn needs_neighbors(self) -> bool {
        matches!(self, Strategy::Neighs | Strategy::PatchInstructNeighs)
    }

    /// The patches an LLM is asked to echo back, for fidelity scoring.
    /// `None` for strategies whose output has no numeric patch list.
    pub fn expected_patches(self, context: &[f64], window: usize, stride: usize, horizon: usize) -> Option<PatchSet> {
        match self {
            Strategy::PatchInstruct
            | Strategy::PatchInstructNeighs
            | Strategy::BasicPI
            | Strategy::ReverseOrderedPI => patching::overlapping_patches(context, window, stride)
                .ok()
                .map(|ps| patching::reverse_patches(&ps)),
            Strategy::NonOverlappingPI => patching::nonoverlapping_patches(context, horizon).ok(),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.name().to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = PromptError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Strategy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PromptError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub strategy: Strategy,
    pub system_text: String,
    pub version: String,
}

/// Substitutes `{name}` markers. Only `[a-z0-9_]+` names count as markers;
/// any other brace is copied through.
pub fn render_placeholders(text: &str, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let value = bindings
                .get(name)
                .ok_or_else(|| PromptError::UnboundPlaceholder(name.to_string()))?;
            out.push_str(value);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

pub fn build_system_prompt(template: &PromptTemplate, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
    render_placeholders(&template.system_text, bindings)
}

/// The full template set for every strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    templates: BTreeMap<Strategy, String>,
    zeroshot_generic: String,
}

macro_rules! builtin {
    ($file:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/", $file))
    };
}

fn clean(text: &str) -> String {
    text.trim_end_matches(['\n', '\r']).to_string()
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let files = [
            (Strategy::Zeroshot, builtin!("zeroshot.txt")),
            (Strategy::PatchInstruct, builtin!("patch_instruct.txt")),
            (Strategy::Neighs, builtin!("neighs.txt")),
            (Strategy::PatchInstructNeighs, builtin!("patch_instruct_neighs.txt")),
            (Strategy::BasicPI, builtin!("basic_patch.txt")),
            (Strategy::NonOverlappingPI, builtin!("nonoverlap_patch.txt")),
            (Strategy::StrDecomposePI, builtin!("str_patch.txt")),
            (Strategy::ReverseOrderedPI, builtin!("reverse_patch.txt")),
            (Strategy::MetaTokensPI, builtin!("meta_patch.txt")),
        ];
        TemplateSet {
            version: builtin!("VERSION").trim().to_string(),
            templates: files.into_iter().map(|(s, t)| (s, clean(t))).collect(),
            zeroshot_generic: clean(builtin!("zeroshot_generic.txt")),
        }
    }

    /// Loads templates from a directory laid out like the built-in `templates/`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| PromptError::Io { path: path.display().to_string(), source })
        };
        let mut templates = BTreeMap::new();
        for s in Strategy::ALL {
            templates.insert(s, clean(&read(s.template_file())?));
        }
        Ok(TemplateSet {
            version: read("VERSION")?.trim().to_string(),
            templates,
            zeroshot_generic: clean(&read("zeroshot_generic.txt")?),
        })
    }

    pub fn with_version(mut self, version: impl Into<String>) -> Self {
        self.version = version.into();
        self
    }

    pub fn template(&self, strategy: Strategy) -> PromptTemplate {
        PromptTemplate {
            strategy,
            system_text: self.templates[&strategy].clone(),
            version: self.version.clone(),
        }
    }

    fn zeroshot_generic(&self) -> PromptTemplate {
        PromptTemplate {
            strategy: Strategy::Zeroshot,
            system_text: self.zeroshot_generic.clone(),
            version: self.version.clone(),
        }
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// "10 minutes", "hour", "2 hours", ... for "measured every {interval}".
pub fn interval_description(seconds: u64) -> String {
    let (n, unit) = if seconds.is_multiple_of(86_400) {
        (seconds / 86_400, "day")
    } else if seconds.is_multiple_of(3600) {
        (seconds / 3600, "hour")
    } else if seconds.is_multiple_of(60) {
        (seconds / 60, "minute")
    } else {
        (seconds, "second")
    };
    if n == 1 {
        unit.to_string()
    } else {
        format!("{n} {unit}s")
    }
}

/// Compact cadence label such as "10-min" or "1-hour".
pub fn cadence_label(seconds: u64) -> String {
    if seconds.is_multiple_of(3600) {
        format!("{}-hour", seconds / 3600)
    } else if seconds.is_multiple_of(60) {
        format!("{}-min", seconds / 60)
    } else {
        format!("{seconds}-s")
    }
}

/// Series metadata needed by the templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesInfo {
    pub label: String,
    pub description: String,
    pub interval_seconds: u64,
    pub utc_offset_seconds: i64,
}

impl SeriesInfo {
    pub fn from_series(series: &crate::dataset::Series, utc_offset_seconds: i64) -> Self {
        SeriesInfo {
            label: series.label.clone(),
            description: series.description.clone(),
            interval_seconds: series.interval_seconds,
            utc_offset_seconds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub patch_window: usize,
    pub patch_stride: usize,
    /// Use a one-line descriptive system prompt for zero-shot instead of none.
    pub zeroshot_system: bool,
    /// Send trend/residual or slot tokens alongside the raw sequence for the
    /// decomposition and meta-token strategies.
    pub pre_tokenized: bool,
    pub trend_window: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            patch_window: patching::DEFAULT_WINDOW,
            patch_stride: patching::DEFAULT_STRIDE,
            zeroshot_system: false,
            pre_tokenized: false,
            trend_window: patching::DEFAULT_TREND_WINDOW,
        }
    }
}

/// A system + user message pair ready for dispatch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub strategy: Strategy,
    pub window_id: String,
    pub horizon: usize,
    pub neighbor_count: usize,
    pub template_version: String,
}

impl PromptBundle {
    /// Content hash used to key recorded responses. Covers the template
    /// version, strategy and both messages.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for part in [self.template_version.as_str(), self.strategy.name(), &self.system, &self.user] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

fn join_values(values: &[f64]) -> Result<String, PromptError> {
    let rendered = values
        .iter()
        .map(|&v| format_value(v, VALUE_DECIMALS))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rendered.join(", "))
}

pub fn build_user_prompt(window: &EvalWindow) -> Result<String, PromptError> {
    Ok(format!(
        "Continue the following sequence without producing any additional text. Sequence: <{}>. Predict the next {} values.",
        join_values(&window.context)?,
        window.horizon
    ))
}

/// One `Neighbor i: <...>` line per entry in ascending-distance order. A
/// continuation, when the pool carried one, follows as ` then <...>`.
pub fn render_neighbor_block(ns: &NeighborSet) -> Result<String, PromptError> {
    if ns.entries.is_empty() {
        return Err(PromptError::EmptyNeighborSet);
    }
    let mut lines = Vec::with_capacity(ns.entries.len());
    for (i, entry) in ns.entries.iter().enumerate() {
        let mut line = format!("Neighbor {}: <{}>", i + 1, join_values(&entry.window.values)?);
        if let Some(cont) = &entry.window.continuation {
            line.push_str(&format!(" then <{}>", join_values(cont)?));
        }
        lines.push(line);
    }
    Ok(lines.join("\n"))
}

fn token_preamble(strategy: Strategy, window: &EvalWindow, info: &SeriesInfo, opts: &PromptOptions) -> Result<Option<String>, PromptError> {
    match strategy {
        Strategy::StrDecomposePI => {
            let d = patching::str_decompose(&window.context, opts.trend_window.min(odd_floor(window.context.len())))?;
            let tokens = patching::composite_tokens(&d)
                .into_iter()
                .map(|(t, r)| Ok(format!("[{}, {}]", format_value(t, VALUE_DECIMALS)?, format_value(r, VALUE_DECIMALS)?)))
                .collect::<Result<Vec<_>, PromptError>>()?;
            Ok(Some(format!("Composite tokens: {}", tokens.join(", "))))
        }
        Strategy::MetaTokensPI => {
            let tokens = patching::meta_tokens(&window.context, &window.context_timestamps, info.utc_offset_seconds)?
                .into_iter()
                .map(|(v, slot)| Ok(format!("({};{})", format_value(v, VALUE_DECIMALS)?, slot)))
                .collect::<Result<Vec<_>, PromptError>>()?;
            Ok(Some(format!("Tokens: {}", tokens.join(", "))))
        }
        _ => Ok(None),
    }
}

fn odd_floor(n: usize) -> usize {
    if n % 2 == 1 {
        n
    } else {
        n.saturating_sub(1).max(1)
    }
}

pub fn bindings(window: &EvalWindow, info: &SeriesInfo, opts: &PromptOptions, k: usize) -> BTreeMap<String, String> {
    let l = window.context.len();
    let slots: Vec<String> = (1..=window.horizon).map(|i| format!("y{i}")).collect();
    [
        ("series_description", info.description.clone()),
        ("series_label", info.label.clone()),
        ("interval_description", interval_description(info.interval_seconds)),
        ("cadence", cadence_label(info.interval_seconds)),
        ("window", opts.patch_window.to_string()),
        ("stride", opts.patch_stride.to_string()),
        ("horizon", window.horizon.to_string()),
        ("k", k.to_string()),
        ("context_len", l.to_string()),
        ("context_len_minus_1", l.saturating_sub(1).to_string()),
        ("context_len_minus_2", l.saturating_sub(2).to_string()),
        ("output_slots", slots.join(", ")),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Builds the prompt bundle for one window.
pub fn assemble(
    strategy: Strategy,
    window: &EvalWindow,
    info: &SeriesInfo,
    opts: &PromptOptions,
    templates: &TemplateSet,
    neighbors: Option<&NeighborSet>,
) -> Result<PromptBundle, PromptError> {
    match (strategy.needs_neighbors(), neighbors) {
        (true, None) => return Err(PromptError::MissingNeighbors(strategy)),
        (false, Some(_)) => return Err(PromptError::UnexpectedNeighbors(strategy)),
        _ => {}
    }
    let k = neighbors.map_or(0, NeighborSet::len);
    let template = if strategy == Strategy::Zeroshot && opts.zeroshot_system {
        templates.zeroshot_generic()
    } else {
        templates.template(strategy)
    };
    let system = build_system_prompt(&template, &bindings(window, info, opts, k))?;

    let mut sections = Vec::new();
    if let Some(ns) = neighbors {
        sections.push(render_neighbor_block(ns)?);
    }
    if opts.pre_tokenized {
        if let Some(line) = token_preamble(strategy, window, info, opts)? {
            sections.push(line);
        }
    }
    sections.push(build_user_prompt(window)?);

    Ok(PromptBundle {
        system,
        user: sections.join("\n"),
        strategy,
        window_id: window.id(),
        horizon: window.horizon,
        neighbor_count: k,
        template_version: template.version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::{CandidateWindow, Neighbor};

    fn window(context: Vec<f64>, horizon: usize) -> EvalWindow {
        let n = context.len() as i64;
        EvalWindow {
            series_id: "rh".into(),
            context_start: 0,
            context,
            horizon,
            truth: vec![0.0; horizon],
            context_timestamps: (0..n).map(|i| 36_000 + i * 600).collect(),
            interval_seconds: 600,
        }
    }

    fn info() -> SeriesInfo {
        SeriesInfo {
            label: "Humidity".into(),
            description: "the total regional humidity".into(),
            interval_seconds: 600,
            utc_offset_seconds: 0,
        }
    }

    fn neighbor_set(rows: &[&[f64]]) -> NeighborSet {
        NeighborSet {
            k: rows.len(),
            entries: rows
                .iter()
                .enumerate()
                .map(|(i, r)| Neighbor {
                    window: CandidateWindow { series_id: "n".into(), start_index: i, values: r.to_vec(), continuation: None },
                    distance: i as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn user_prompt_wording() {
        assert_eq!(
            build_user_prompt(&window(vec![1.0, 2.0, 3.0], 1)).unwrap(),
            "Continue the following sequence without producing any additional text. Sequence: <1, 2, 3>. Predict the next 1 values."
        );
        let p = build_user_prompt(&window(vec![0.80325, 1.5], 3)).unwrap();
        assert!(p.ends_with("Predict the next 3 values."));
        assert!(p.contains("<0.8032, 1.5>"));
    }

    #[test]
    fn patch_instruct_system_prompt() {
        let t = TemplateSet::builtin().template(Strategy::PatchInstruct);
        let w = window(vec![1.0; 96], 3);
        let s = build_system_prompt(&t, &bindings(&w, &info(), &PromptOptions::default(), 0)).unwrap();
        assert!(s.contains("Split the series into overlapping patches with window size 3 and stride 1"));
        assert!(s.contains("The sequence represents the total regional humidity measured every 10 minutes."));
        assert!(s.contains("[y1, y2, y3]"));
        assert!(s.contains("Decimals ≤ 4 places; keep leading zeros (e.g., 0.8032)."));
    }

    #[test]
    fn neighs_system_prompt_names_k() {
        let w = window(vec![1.0; 8], 3);
        let ns = neighbor_set(&[&[1.0; 8], &[2.0; 8], &[3.0; 8], &[4.0; 8], &[5.0; 8]]);
        let b = assemble(Strategy::Neighs, &w, &info(), &PromptOptions::default(), &TemplateSet::builtin(), Some(&ns)).unwrap();
        assert!(b.system.contains("You will also be given 5 neighbor time-series similar to the one to forecast"));
        assert_eq!(b.neighbor_count, 5);
    }

    #[test]
    fn unbound_placeholder() {
        let t = PromptTemplate { strategy: Strategy::PatchInstruct, system_text: "next {horizon} values".into(), version: "x".into() };
        assert!(matches!(
            build_system_prompt(&t, &BTreeMap::new()),
            Err(PromptError::UnboundPlaceholder(p)) if p == "horizon"
        ));
        let plain = render_placeholders("json {\"a\": 1} {Upper} {}", &BTreeMap::new()).unwrap();
        assert_eq!(plain, "json {\"a\": 1} {Upper} {}");
    }

    #[test]
    fn neighbor_block_layout() {
        assert_eq!(render_neighbor_block(&neighbor_set(&[&[1.0, 2.0]])).unwrap(), "Neighbor 1: <1, 2>");
        let block = render_neighbor_block(&neighbor_set(&[&[1.0], &[2.0], &[3.0], &[4.0], &[5.0]])).unwrap();
        assert_eq!(block.lines().count(), 5);
        assert!(block.lines().nth(4).unwrap().starts_with("Neighbor 5: <5>"));
        assert!(matches!(render_neighbor_block(&neighbor_set(&[])), Err(PromptError::EmptyNeighborSet)));

        let mut ns = neighbor_set(&[&[1.0]]);
        ns.entries[0].window.continuation = Some(vec![2.0, 3.0]);
        assert_eq!(render_neighbor_block(&ns).unwrap(), "Neighbor 1: <1> then <2, 3>");
    }

    #[test]
    fn assemble_checks_neighbor_presence() {
        let w = window(vec![1.0, 2.0, 3.0], 1);
        let t = TemplateSet::builtin();
        let o = PromptOptions::default();
        assert!(matches!(assemble(Strategy::PatchInstructNeighs, &w, &info(), &o, &t, None), Err(PromptError::MissingNeighbors(_))));
        let ns = neighbor_set(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(assemble(Strategy::Zeroshot, &w, &info(), &o, &t, Some(&ns)), Err(PromptError::UnexpectedNeighbors(_))));
    }

    #[test]
    fn zeroshot_bundle() {
        let w = window(vec![1.0, 2.0, 3.0], 2);
        let b = assemble(Strategy::Zeroshot, &w, &info(), &PromptOptions::default(), &TemplateSet::builtin(), None).unwrap();
        assert_eq!(b.system, "");
        assert_eq!(b.user, build_user_prompt(&w).unwrap());
        assert!(!b.user.contains("Patches"));

        let opts = PromptOptions { zeroshot_system: true, ..Default::default() };
        let b = assemble(Strategy::Zeroshot, &w, &info(), &opts, &TemplateSet::builtin(), None).unwrap();
        assert!(b.system.starts_with("You are a forecasting assistant"));
    }

    #[test]
    fn neighbors_precede_the_sequence() {
        let w = window(vec![1.0, 2.0], 1);
        let ns = neighbor_set(&[&[3.0, 4.0]]);
        let b = assemble(Strategy::PatchInstructNeighs, &w, &info(), &PromptOptions::default(), &TemplateSet::builtin(), Some(&ns)).unwrap();
        assert_eq!(
            b.user,
            "Neighbor 1: <3, 4>\nContinue the following sequence without producing any additional text. Sequence: <1, 2>. Predict the next 1 values."
        );
    }

    #[test]
    fn pre_tokenized_preambles() {
        let w = window(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1);
        let opts = PromptOptions { pre_tokenized: true, trend_window: 3, ..Default::default() };
        let t = TemplateSet::builtin();
        let b = assemble(Strategy::StrDecomposePI, &w, &info(), &opts, &t, None).unwrap();
        assert!(b.user.starts_with("Composite tokens: [1.5, -0.5], [2, 0], [3, 0], [4, 0], [4.5, 0.5]\n"));
        let b = assemble(Strategy::MetaTokensPI, &w, &info(), &opts, &t, None).unwrap();
        assert!(b.user.starts_with("Tokens: (1;60), (2;61), (3;62), (4;63), (5;64)\n"));
        let b = assemble(Strategy::PatchInstruct, &w, &info(), &opts, &t, None).unwrap();
        assert!(b.user.starts_with("Continue"));
    }

    #[test]
    fn every_template_renders_without_markers() {
        let w = window(vec![1.0; 96], 3);
        let ns = neighbor_set(&[&[1.0; 96]]);
        for s in Strategy::ALL {
            let b = assemble(s, &w, &info(), &PromptOptions::default(), &TemplateSet::builtin(), s.needs_neighbors().then_some(&ns)).unwrap();
            assert!(!b.system.contains("{horizon}") && !b.system.contains("{window}"), "{s}");
            assert_eq!(b.template_version, "v1");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn interval_labels() {
        assert_eq!(interval_description(600), "10 minutes");
        assert_eq!(interval_description(3600), "hour");
        assert_eq!(interval_description(7200), "2 hours");
        assert_eq!(interval_description(45), "45 seconds");
        assert_eq!(cadence_label(600), "10-min");
        assert_eq!(cadence_label(3600), "1-hour");
    }

    #[test]
    fn hash_changes_with_version() {
        let w = window(vec![1.0, 2.0, 3.0], 1);
        let o = PromptOptions::default();
        let a = assemble(Strategy::PatchInstruct, &w, &info(), &o, &TemplateSet::builtin(), None).unwrap();
        let b = assemble(Strategy::PatchInstruct, &w, &info(), &o, &TemplateSet::builtin().with_version("v2"), None).unwrap();
        assert_eq!(a.content_hash(), a.clone().content_hash());
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }
}
