use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::prompting::PromptBundle;

use super::{
    estimate_input_tokens, estimate_tokens, Backend, BackendConfig, GatewayError, LlmResponse, TokenSource,
};

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    temperature: f64,
    api_key: String,
    max_retries: u32,
    backoff_initial: Duration,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let endpoint = cfg
            .endpoint_url
            .as_deref()
            .ok_or_else(|| GatewayError::Config("http backend needs an endpoint".into()))?;
        let model = cfg
            .model_name
            .clone()
            .ok_or_else(|| GatewayError::Config("http backend needs a model".into()))?;
        let api_key = cfg.resolve_api_key()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(cfg.timeout_seconds.max(1))).build();
        Ok(HttpBackend {
            agent,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model,
            temperature: cfg.temperature,
            api_key,
            max_retries: cfg.max_retries,
            backoff_initial: Duration::from_millis(cfg.backoff_initial_ms),
        })
    }

    fn request_body(&self, bundle: &PromptBundle) -> Value {
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> Result<Value, GatewayError> {
        let result = self
            .agent
            .post(&self.url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_json(body.clone());
        match result {
            Ok(resp) => resp.into_json::<Value>().map_err(|e| {
                if is_timeout(&e) {
                    GatewayError::Timeout
                } else {
                    GatewayError::MalformedResponse(e.to_string())
                }
            }),
            Err(ureq::Error::Status(status, resp)) => {
                Err(GatewayError::HttpStatus { status, body: resp.into_string().unwrap_or_default() })
            }
            Err(ureq::Error::Transport(t)) => {
                let message = t.to_string();
                if t.kind() == ureq::ErrorKind::Io && message.contains("timed out")
                    || std::error::Error::source(&t)
                        .and_then(|s| s.downcast_ref::<std::io::Error>())
                        .is_some_and(is_timeout)
                {
                    Err(GatewayError::Timeout)
                } else {
                    Err(GatewayError::Transport(message))
                }
            }
        }
    }
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock)
}

fn retryable(e: &GatewayError) -> bool {
    matches!(e, GatewayError::Transport(_) | GatewayError::Timeout | GatewayError::HttpStatus { status: 429, .. })
}

fn read_completion(body: &Value) -> Result<(String, Option<(u64, u64)>), GatewayError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))?
        .to_string();
    let usage = match (
        body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        body.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    ) {
        (Some(i), Some(o)) => Some((i, o)),
        _ => None,
    };
    Ok((text, usage))
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, GatewayError> {
        let body = self.request_body(bundle);
        let started = Instant::now();
        let mut delay = self.backoff_initial;
        let mut attempt = 0;
        let reply = loop {
            match self.attempt(&body) {
                Ok(v) => break v,
                Err(e) if retryable(&e) && attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
                Err(e) => return Err(e),
            }
        };
        let latency_seconds = started.elapsed().as_secs_f64();
        let (text, usage) = read_completion(&reply)?;
        let (input_tokens, output_tokens, token_source) = match usage {
            Some((i, o)) => (i, o, TokenSource::Reported),
            None => (estimate_input_tokens(bundle), estimate_tokens(&text), TokenSource::Estimated),
        };
        Ok(LlmResponse { text, input_tokens, output_tokens, latency_seconds, backend_id: self.id(), token_source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::BackendKind;
    use crate::prompting::Strategy;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves the given (status, body) replies in order, one per connection,
    /// and records each request body.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(format!("{auth}\n{}", String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    fn config(url: String) -> BackendConfig {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint_url: Some(url),
            model_name: Some("m".into()),
            api_key: Some("secret".into()),
            backoff_initial_ms: 1,
            timeout_seconds: 5,
            ..Default::default()
        }
    }

    fn bundle() -> PromptBundle {
        PromptBundle {
            system: "S".into(),
            user: "U".into(),
            strategy: Strategy::Zeroshot,
            window_id: "w".into(),
            horizon: 1,
            neighbor_count: 0,
            template_version: "v1".into(),
        }
    }

    const OK: &str = r#"{"choices":[{"message":{"content":"[1.5]"}}],"usage":{"prompt_tokens":11,"completion_tokens":3}}"#;

    #[test]
    fn reported_usage_and_request_shape() {
        let (url, seen) = serve(vec![(200, OK.into())]);
        let r = HttpBackend::new(&config(url)).unwrap().complete(&bundle()).unwrap();
        assert_eq!(r.text, "[1.5]");
        assert_eq!((r.input_tokens, r.output_tokens), (11, 3));
        assert_eq!(r.token_source, TokenSource::Reported);
        assert_eq!(r.backend_id, "http:m");
        let req = seen.lock().unwrap()[0].clone();
        let (auth, body) = req.split_once('\n').unwrap();
        assert_eq!(auth, "Authorization: Bearer secret");
        let body: Value = serde_json::from_str(body).unwrap();
        assert_eq!(body["model"], "m");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "U");
    }

    #[test]
    fn missing_usage_is_estimated() {
        let (url, _) = serve(vec![(200, r#"{"choices":[{"message":{"content":"[2]"}}]}"#.into())]);
        let r = HttpBackend::new(&config(url)).unwrap().complete(&bundle()).unwrap();
        assert_eq!(r.token_source, TokenSource::Estimated);
        assert_eq!(r.output_tokens, 1);
    }

    #[test]
    fn retries_on_429_then_succeeds() {
        let (url, seen) = serve(vec![(429, "{}".into()), (429, "{}".into()), (200, OK.into())]);
        let r = HttpBackend::new(&config(url)).unwrap().complete(&bundle()).unwrap();
        assert_eq!(r.text, "[1.5]");
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn retries_are_bounded() {
        let (url, seen) = serve(vec![(429, "slow down".into()), (429, "slow down".into())]);
        let cfg = BackendConfig { max_retries: 1, ..config(url) };
        let err = HttpBackend::new(&cfg).unwrap().complete(&bundle()).unwrap_err();
        assert!(matches!(err, GatewayError::HttpStatus { status: 429, ref body } if body == "slow down"));
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn server_error_is_not_retried() {
        let (url, seen) = serve(vec![(500, "boom".into())]);
        let err = HttpBackend::new(&config(url)).unwrap().complete(&bundle()).unwrap_err();
        assert!(matches!(err, GatewayError::HttpStatus { status: 500, .. }));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn timeout_is_reported() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hold = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_millis(2500));
            drop(s);
        });
        let cfg = BackendConfig { timeout_seconds: 1, max_retries: 0, ..config(url) };
        let err = HttpBackend::new(&cfg).unwrap().complete(&bundle()).unwrap_err();
        assert!(matches!(err, GatewayError::Timeout), "{err:?}");
        hold.join().unwrap();
    }

    #[test]
    fn missing_key_is_a_config_error() {
        let cfg = BackendConfig { api_key: None, ..config("http://127.0.0.1:9".into()) };
        if std::env::var(crate::gateway::API_KEY_ENV).is_err() {
            assert!(matches!(HttpBackend::new(&cfg), Err(GatewayError::Config(_))));
        }
    }
}
