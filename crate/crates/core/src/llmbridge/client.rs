use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{LlmError, ModelConfig};

const SYSTEM_PROMPT: &str =
    "You track a collaborative block-building task. Follow the output format exactly.";

/// One model call. `key` names the call (group, experiment, turn) for logs
/// and fixtures; `oracle` is the reference answer, used only by mocks.
#[derive(Debug, Clone, Default)]
pub struct Query<'a> {
    pub prompt: &'a str,
    pub key: String,
    pub oracle: Option<String>,
}

impl<'a> Query<'a> {
    pub fn new(prompt: &'a str) -> Self {
        Query {
            prompt,
            ..Query::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub attempts: usize,
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, query: &Query<'_>) -> Result<Completion, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Value>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(config: &ModelConfig, prompt: &str) -> Self {
        ChatRequest {
            model: config.model.clone(),
            messages: vec![
                json!({"role": "system", "content": SYSTEM_PROMPT}),
                json!({"role": "user", "content": prompt}),
            ],
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportFailure {
    pub message: String,
    pub timed_out: bool,
}

/// Moves one request to the endpoint and back.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<HttpReply, TransportFailure>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &ModelConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport {
                attempts: vec![format!("client setup: {e}")],
            })?;
        let base = config.base_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(HttpTransport {
            client,
            url,
            api_key: config.api_key()?,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<HttpReply, TransportFailure> {
        let body = serde_json::to_string(request).expect("serializable request");
        let mut req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportFailure {
            timed_out: e.is_timeout(),
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportFailure {
            timed_out: e.is_timeout(),
            message: e.to_string(),
        })?;
        Ok(HttpReply { status, body })
    }
}

/// Replays a fixed sequence of transport outcomes, then fails.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<HttpReply, TransportFailure>>>,
    sent: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new(script: impl IntoIterator<Item = Result<HttpReply, TransportFailure>>) -> Self {
        ScriptedTransport {
            script: Mutex::new(script.into_iter().collect()),
            sent: Mutex::new(Vec::new()),
        }
    }

    /// A 200 reply in the chat-completion wire format.
    pub fn ok(content: &str) -> Result<HttpReply, TransportFailure> {
        Ok(HttpReply {
            status: 200,
            body: json!({
                "choices": [{"message": {"role": "assistant", "content": content}}],
                "usage": {"prompt_tokens": 10, "completion_tokens": 5},
            })
            .to_string(),
        })
    }

    pub fn status(status: u16, body: &str) -> Result<HttpReply, TransportFailure> {
        Ok(HttpReply {
            status,
            body: body.to_string(),
        })
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.sent.lock().expect("lock").clone()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> Result<HttpReply, TransportFailure> {
        self.sent.lock().expect("lock").push(request.clone());
        self.script
            .lock()
            .expect("lock")
            .pop_front()
            .unwrap_or_else(|| {
                Err(TransportFailure {
                    message: "script exhausted".into(),
                    timed_out: false,
                })
            })
    }
}

/// Sends chat requests with retries. Transport failures, 429 and 5xx are
/// retried after `backoff_ms · 2^k`; other non-2xx statuses are refusals.
pub struct EndpointClient<T: Transport> {
    pub config: ModelConfig,
    pub transport: T,
}

impl<T: Transport> EndpointClient<T> {
    pub fn new(config: ModelConfig, transport: T) -> Self {
        EndpointClient { config, transport }
    }
}

impl EndpointClient<HttpTransport> {
    pub fn http(config: ModelConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let transport = HttpTransport::new(&config)?;
        Ok(EndpointClient { config, transport })
    }
}

fn parse_reply(body: &str) -> Result<(String, Option<u64>, Option<u64>), LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::BadReply(e.to_string()))?;
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| LlmError::BadReply("no choices[0].message.content".into()))?;
    Ok((
        text.to_string(),
        v["usage"]["prompt_tokens"].as_u64(),
        v["usage"]["completion_tokens"].as_u64(),
    ))
}

impl<T: Transport> ChatClient for EndpointClient<T> {
    fn complete(&self, query: &Query<'_>) -> Result<Completion, LlmError> {
        let request = ChatRequest::new(&self.config, query.prompt);
        let started = Instant::now();
        let mut log = Vec::new();
        let mut all_timeouts = true;
        let tries = self.config.retries as usize + 1;
        for attempt in 0..tries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.transport.send(&request) {
                Ok(r) if (200..300).contains(&r.status) => {
                    let (text, prompt_tokens, completion_tokens) = parse_reply(&r.body)?;
                    return Ok(Completion {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        prompt_tokens,
                        completion_tokens,
                        attempts: attempt + 1,
                    });
                }
                Ok(r) if r.status == 429 || r.status >= 500 => {
                    all_timeouts = false;
                    log.push(format!("attempt {}: status {}", attempt + 1, r.status));
                }
                Ok(r) => {
                    return Err(LlmError::EndpointRefusal {
                        status: r.status,
                        body: r.body,
                    })
                }
                Err(f) => {
                    all_timeouts &= f.timed_out;
                    log.push(format!("attempt {}: {}", attempt + 1, f.message));
                }
            }
        }
        if all_timeouts {
            Err(LlmError::Timeout {
                attempts: tries,
                timeout_secs: self.config.timeout_secs,
            })
        } else {
            Err(LlmError::Transport { attempts: log })
        }
    }
}

/// One-shot call against the configured HTTP endpoint.
pub fn query_model(prompt: &str, config: &ModelConfig) -> Result<Completion, LlmError> {
    EndpointClient::http(config.clone())?.complete(&Query::new(prompt))
}

/// Canned replies for offline runs.
///
/// ```json
/// {"replies": {"<query key or prompt sha256>": "..."}, "default": "...", "mode": "oracle"}
/// ```
///
/// Lookup order: exact key, prompt hash, the query's oracle answer (oracle
/// mode only), then the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixtures {
    #[serde(default)]
    pub replies: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

impl MockFixtures {
    pub fn oracle() -> Self {
        MockFixtures {
            mode: Some("oracle".into()),
            ..MockFixtures::default()
        }
    }

    pub fn constant(reply: &str) -> Self {
        MockFixtures {
            default: Some(reply.into()),
            ..MockFixtures::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let f: MockFixtures =
            serde_json::from_str(text).map_err(|e| LlmError::Fixtures(e.to_string()))?;
        match f.mode.as_deref() {
            None | Some("oracle") => Ok(f),
            Some(other) => Err(LlmError::Fixtures(format!("unknown mode `{other}`"))),
        }
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct MockClient {
    pub fixtures: MockFixtures,
}

impl MockClient {
    pub fn new(fixtures: MockFixtures) -> Self {
        MockClient { fixtures }
    }
}

impl ChatClient for MockClient {
    fn complete(&self, query: &Query<'_>) -> Result<Completion, LlmError> {
        let f = &self.fixtures;
        let text = f
            .replies
            .get(&query.key)
            .or_else(|| f.replies.get(&prompt_hash(query.prompt)))
            .cloned()
            .or_else(|| {
                (f.mode.as_deref() == Some("oracle"))
                    .then(|| query.oracle.clone())
                    .flatten()
            })
            .or_else(|| f.default.clone())
            .ok_or_else(|| LlmError::NoFixture(query.key.clone()))?;
        Ok(Completion {
            text,
            latency_ms: 0,
            prompt_tokens: None,
            completion_tokens: None,
            attempts: 1,
        })
    }
}

/// Append-only JSONL record of every request and reply.
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            file: Mutex::new(file),
        })
    }

    pub fn record(&self, query: &Query<'_>, outcome: &Result<Completion, LlmError>) -> std::io::Result<()> {
        let entry = match outcome {
            Ok(c) => json!({"key": query.key, "prompt": query.prompt, "reply": c.text,
                "latency_ms": c.latency_ms, "prompt_tokens": c.prompt_tokens,
                "completion_tokens": c.completion_tokens, "attempts": c.attempts}),
            Err(e) => json!({"key": query.key, "prompt": query.prompt, "error": e.to_string()}),
        };
        let mut f = self.file.lock().expect("lock");
        writeln!(f, "{entry}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> ModelConfig {
        ModelConfig {
            backoff_ms: 0,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn mock_passthrough() {
        let m = MockClient::new(MockFixtures::constant("hello"));
        assert_eq!(m.complete(&Query::new("x")).unwrap().text, "hello");
        let m = MockClient::new(MockFixtures::oracle());
        let q = Query {
            prompt: "x",
            key: "k".into(),
            oracle: Some("truth".into()),
        };
        assert_eq!(m.complete(&q).unwrap().text, "truth");
        let m = MockClient::new(MockFixtures::default());
        assert!(matches!(m.complete(&q), Err(LlmError::NoFixture(_))));
    }

    #[test]
    fn retries_through_server_errors() {
        let t = ScriptedTransport::new([
            ScriptedTransport::status(500, "boom"),
            ScriptedTransport::status(500, "boom"),
            ScriptedTransport::ok("fine"),
        ]);
        let c = EndpointClient::new(ModelConfig { retries: 3, ..fast() }, t);
        let out = c.complete(&Query::new("p")).unwrap();
        assert_eq!(out.text, "fine");
        assert_eq!(out.attempts, 3);
        assert_eq!(out.prompt_tokens, Some(10));
        let sent = c.transport.requests();
        assert_eq!(sent.len(), 3);
        assert_eq!(sent[0].temperature, 0.0);
    }

    #[test]
    fn exhaustion_and_refusal() {
        let t = ScriptedTransport::new([
            ScriptedTransport::status(503, ""),
            Err(TransportFailure { message: "reset".into(), timed_out: false }),
        ]);
        let c = EndpointClient::new(ModelConfig { retries: 1, ..fast() }, t);
        match c.complete(&Query::new("p")) {
            Err(LlmError::Transport { attempts }) => assert_eq!(attempts.len(), 2),
            other => panic!("{other:?}"),
        }

        let t = ScriptedTransport::new([ScriptedTransport::status(401, "bad key")]);
        let c = EndpointClient::new(fast(), t);
        assert_eq!(
            c.complete(&Query::new("p")),
            Err(LlmError::EndpointRefusal { status: 401, body: "bad key".into() })
        );

        let to = || Err(TransportFailure { message: "timeout".into(), timed_out: true });
        let c = EndpointClient::new(ModelConfig { retries: 1, ..fast() }, ScriptedTransport::new([to(), to()]));
        assert!(matches!(c.complete(&Query::new("p")), Err(LlmError::Timeout { attempts: 2, .. })));
    }
}
