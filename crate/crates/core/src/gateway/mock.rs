use crate::dataset::format_value;
use crate::prompting::{PromptBundle, VALUE_DECIMALS};

use super::{estimate_input_tokens, estimate_tokens, Backend, GatewayError, LlmResponse, TokenSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKind {
    /// Repeats the last context value.
    Persistence,
    /// Extends the slope of the last two context values.
    Linear,
}

/// Offline backend whose answer is a pure function of the user prompt.
#[derive(Debug, Clone)]
pub struct MockBackend {
    kind: MockKind,
}

impl MockBackend {
    pub fn new(kind: MockKind) -> Self {
        MockBackend { kind }
    }

    pub fn forecast(&self, context: &[f64], horizon: usize) -> Vec<f64> {
        let last = *context.last().expect("non-empty context");
        match self.kind {
            MockKind::Persistence => vec![last; horizon],
            MockKind::Linear => {
                let slope = if context.len() >= 2 { last - context[context.len() - 2] } else { 0.0 };
                (1..=horizon).map(|i| last + slope * i as f64).collect()
            }
        }
    }
}

/// Reads the context values and horizon back out of a rendered user prompt.
pub(crate) fn read_user_prompt(user: &str) -> Result<(Vec<f64>, usize), GatewayError> {
    let bad = |why: &str| GatewayError::MalformedPrompt(why.to_string());
    let start = user.rfind("Sequence: <").ok_or_else(|| bad("no sequence"))? + "Sequence: <".len();
    let end = start + user[start..].find('>').ok_or_else(|| bad("unterminated sequence"))?;
    let context = user[start..end]
        .split(", ")
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad("non-numeric value")))
        .collect::<Result<Vec<_>, _>>()?;
    let tail = &user[end..];
    let h_start = tail.find("Predict the next ").ok_or_else(|| bad("no horizon"))? + "Predict the next ".len();
    let horizon = tail[h_start..]
        .split_whitespace()
        .next()
        .and_then(|h| h.parse::<usize>().ok())
        .ok_or_else(|| bad("bad horizon"))?;
    Ok((context, horizon))
}

pub(crate) fn render_list(values: &[f64]) -> String {
    let items: Vec<String> = values
        .iter()
        .map(|&v| format_value(v, VALUE_DECIMALS).unwrap_or_else(|_| v.to_string()))
        .collect();
    format!("[{}]", items.join(", "))
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        match self.kind {
            MockKind::Persistence => "mock-persistence".into(),
            MockKind::Linear => "mock-linear".into(),
        }
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, GatewayError> {
        let (context, horizon) = read_user_prompt(&bundle.user)?;
        let text = render_list(&self.forecast(&context, horizon));
        Ok(LlmResponse {
            input_tokens: estimate_input_tokens(bundle),
            output_tokens: estimate_tokens(&text),
            text,
            latency_seconds: 0.0,
            backend_id: self.id(),
            token_source: TokenSource::Estimated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::Strategy;

    fn bundle(user: &str) -> PromptBundle {
        PromptBundle {
            system: "sys".into(),
            user: user.into(),
            strategy: Strategy::Zeroshot,
            window_id: "w".into(),
            horizon: 0,
            neighbor_count: 0,
            template_version: "v1".into(),
        }
    }

    const SEQ: &str = "Continue the following sequence without producing any additional text.";

    #[test]
    fn persistence_repeats_last_value() {
        let b = bundle(&format!("{SEQ} Sequence: <1, 2.25, 7.5>. Predict the next 3 values."));
        let r = MockBackend::new(MockKind::Persistence).complete(&b).unwrap();
        assert_eq!(r.text, "[7.5, 7.5, 7.5]");
        assert_eq!(r.token_source, TokenSource::Estimated);
        assert_eq!(r.input_tokens, estimate_tokens("sys") + estimate_tokens(&b.user));
        assert_eq!(r.output_tokens, estimate_tokens("[7.5, 7.5, 7.5]"));
    }

    #[test]
    fn linear_extends_slope() {
        let b = bundle(&format!("{SEQ} Sequence: <1, 2, 3>. Predict the next 2 values."));
        assert_eq!(MockBackend::new(MockKind::Linear).complete(&b).unwrap().text, "[4, 5]");
        let b = bundle(&format!("{SEQ} Sequence: <4>. Predict the next 2 values."));
        assert_eq!(MockBackend::new(MockKind::Linear).complete(&b).unwrap().text, "[4, 4]");
    }

    #[test]
    fn neighbors_are_ignored() {
        let b = bundle(&format!("Neighbor 1: <9, 9>\n{SEQ} Sequence: <1, 2>. Predict the next 1 values."));
        assert_eq!(MockBackend::new(MockKind::Persistence).complete(&b).unwrap().text, "[2]");
    }

    #[test]
    fn deterministic() {
        let b = bundle(&format!("{SEQ} Sequence: <0.1, 0.3>. Predict the next 4 values."));
        let m = MockBackend::new(MockKind::Linear);
        assert_eq!(m.complete(&b).unwrap(), m.complete(&b).unwrap());
    }

    #[test]
    fn malformed_prompt() {
        assert!(matches!(
            MockBackend::new(MockKind::Linear).complete(&bundle("hello")),
            Err(GatewayError::MalformedPrompt(_))
        ));
    }
}
