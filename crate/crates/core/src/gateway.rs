//! Completion gateway: one interface over a remote chat-completion endpoint
//! and a deterministic scripted backend.

use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop: Vec<String>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 1024,
            temperature: 0.0,
            stop: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("gateway timeout after {0} ms")]
    Timeout(u128),
    #[error("gateway unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("gateway rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("no scripted rule matches the prompt")]
    ScriptedMiss,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed gateway response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub request: CompletionRequest,
    /// Completion text, or the error message prefixed with `error: `.
    pub response: String,
    pub backend: String,
    pub latency_ms: u64,
}

/// Anything that turns a prompt into a completion.
pub trait Gateway: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;

    /// Calls issued so far, in issue order. Empty when recording is off.
    fn transcript(&self) -> Vec<TranscriptRecord>;

    fn backend_name(&self) -> &str;
}

/// Append-only call log shared by the backends.
#[derive(Debug, Default)]
struct Transcript {
    enabled: bool,
    records: Mutex<Vec<TranscriptRecord>>,
}

impl Transcript {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            records: Mutex::new(Vec::new()),
        }
    }

    fn record(
        &self,
        backend: &str,
        req: &CompletionRequest,
        result: &Result<String, GatewayError>,
        started: Instant,
    ) {
        if !self.enabled {
            return;
        }
        let response = match result {
            Ok(text) => text.clone(),
            Err(e) => format!("error: {e}"),
        };
        self.records.lock().expect("transcript lock").push(TranscriptRecord {
            request: req.clone(),
            response,
            backend: backend.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
        });
    }

    fn snapshot(&self) -> Vec<TranscriptRecord> {
        self.records.lock().expect("transcript lock").clone()
    }
}

fn check_request(req: &CompletionRequest) -> Result<(), GatewayError> {
    if req.prompt.is_empty() {
        return Err(GatewayError::InvalidRequest("prompt is empty".into()));
    }
    Ok(())
}

#[derive(Clone)]
pub enum Matcher {
    Contains(String),
    Regex(Regex),
}

impl Matcher {
    pub fn regex(pattern: &str) -> Result<Self, regex::Error> {
        Ok(Matcher::Regex(Regex::new(pattern)?))
    }

    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Contains(s) => prompt.contains(s.as_str()),
            Matcher::Regex(r) => r.is_match(prompt),
        }
    }
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Matcher::Contains(s) => write!(f, "Contains({s:?})"),
            Matcher::Regex(r) => write!(f, "Regex({:?})", r.as_str()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedRule {
    pub matcher: Matcher,
    pub response: String,
    pub max_uses: Option<u32>,
}

impl ScriptedRule {
    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: Matcher::Contains(needle.into()),
            response: response.into(),
            max_uses: None,
        }
    }

    pub fn regex(pattern: &str, response: impl Into<String>) -> Result<Self, regex::Error> {
        Ok(Self {
            matcher: Matcher::regex(pattern)?,
            response: response.into(),
            max_uses: None,
        })
    }

    pub fn limited(mut self, uses: u32) -> Self {
        self.max_uses = Some(uses);
        self
    }
}

/// On-disk form of a rule: exactly one of `contains` / `regex`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_uses: Option<u32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleFile {
    pub rules: Vec<RuleSpec>,
}

impl RuleSpec {
    pub fn compile(&self) -> Result<ScriptedRule, String> {
        let matcher = match (&self.contains, &self.regex) {
            (Some(s), None) => Matcher::Contains(s.clone()),
            (None, Some(r)) => Matcher::regex(r).map_err(|e| e.to_string())?,
            _ => return Err("a rule needs exactly one of `contains` or `regex`".into()),
        };
        if self.max_uses == Some(0) {
            return Err("max_uses must be positive".into());
        }
        Ok(ScriptedRule {
            matcher,
            response: self.response.clone(),
            max_uses: self.max_uses,
        })
    }
}

/// Returns the response of the first rule whose matcher accepts the prompt
/// and still has uses left.
pub struct ScriptedGateway {
    rules: Vec<ScriptedRule>,
    remaining: Mutex<Vec<Option<u32>>>,
    transcript: Transcript,
}

impl ScriptedGateway {
    pub fn new(rules: Vec<ScriptedRule>) -> Self {
        let remaining = rules.iter().map(|r| r.max_uses).collect();
        Self {
            rules,
            remaining: Mutex::new(remaining),
            transcript: Transcript::new(true),
        }
    }

    pub fn without_recording(rules: Vec<ScriptedRule>) -> Self {
        let mut gw = Self::new(rules);
        gw.transcript = Transcript::new(false);
        gw
    }

    pub fn from_rule_file(file: &RuleFile) -> Result<Self, String> {
        let rules = file
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| r.compile().map_err(|e| format!("rule {i}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(rules))
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: RuleFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_rule_file(&file)
    }

    pub fn rules(&self) -> &[ScriptedRule] {
        &self.rules
    }
}

impl Gateway for ScriptedGateway {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let started = Instant::now();
        let result = check_request(req).and_then(|_| {
            let mut remaining = self.remaining.lock().expect("rule counters");
            for (i, rule) in self.rules.iter().enumerate() {
                if remaining[i] == Some(0) || !rule.matcher.matches(&req.prompt) {
                    continue;
                }
                if let Some(n) = remaining[i].as_mut() {
                    *n -= 1;
                }
                return Ok(rule.response.clone());
            }
            Err(GatewayError::ScriptedMiss)
        });
        self.transcript.record("scripted", req, &result, started);
        result
    }

    fn transcript(&self) -> Vec<TranscriptRecord> {
        self.transcript.snapshot()
    }

    fn backend_name(&self) -> &str {
        "scripted"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            api_key: None,
            model: "default".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_base_ms: 200,
        }
    }
}

/// Chat-completion client over HTTP.
pub struct RemoteGateway {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    transcript: Transcript,
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(GatewayError),
}

impl RemoteGateway {
    pub fn new(cfg: RemoteConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            cfg,
            client,
            transcript: Transcript::new(true),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn body(&self, req: &CompletionRequest) -> serde_json::Value {
        serde_json::json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "stop": req.stop,
        })
    }

    fn attempt(&self, req: &CompletionRequest, budget: Duration) -> Attempt {
        let mut call = self.client.post(&self.cfg.endpoint).timeout(budget).json(&self.body(req));
        if let Some(key) = &self.cfg.api_key {
            call = call.bearer_auth(key);
        }
        let resp = match call.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        if status.is_client_error() {
            return Attempt::Fatal(GatewayError::Rejected {
                status: status.as_u16(),
                body: text,
            });
        }
        if !status.is_success() {
            return Attempt::Transient(format!("status {status}: {text}"));
        }
        match extract_content(&text) {
            Some(content) => Attempt::Done(content),
            None => Attempt::Fatal(GatewayError::Malformed(text)),
        }
    }
}

/// `choices[0].message.content`, falling back to `choices[0].text`.
fn extract_content(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    let choice = v.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(|c| c.as_str())
        .map(str::to_string)
}

impl Gateway for RemoteGateway {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let started = Instant::now();
        let deadline = started + Duration::from_secs_f64(self.cfg.timeout_secs);
        let result = check_request(req).and_then(|_| {
            let mut attempts = 0u32;
            loop {
                let now = Instant::now();
                if now >= deadline {
                    return Err(GatewayError::Timeout(started.elapsed().as_millis()));
                }
                attempts += 1;
                match self.attempt(req, deadline - now) {
                    Attempt::Done(text) => return Ok(text),
                    Attempt::Fatal(e) => return Err(e),
                    Attempt::Transient(msg) => {
                        if Instant::now() >= deadline {
                            return Err(GatewayError::Timeout(started.elapsed().as_millis()));
                        }
                        if attempts > self.cfg.max_retries {
                            return Err(GatewayError::Unavailable { attempts, last: msg });
                        }
                        let backoff = Duration::from_millis(
                            self.cfg.backoff_base_ms.saturating_mul(1 << (attempts - 1).min(16)),
                        );
                        let left = deadline.saturating_duration_since(Instant::now());
                        std::thread::sleep(backoff.min(left));
                    }
                }
            }
        });
        self.transcript.record("remote", req, &result, started);
        result
    }

    fn transcript(&self) -> Vec<TranscriptRecord> {
        self.transcript.snapshot()
    }

    fn backend_name(&self) -> &str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn req(p: &str) -> CompletionRequest {
        CompletionRequest::new(p)
    }

    #[test]
    fn scripted_rule_match_and_miss() {
        let gw = ScriptedGateway::new(vec![ScriptedRule::contains(
            "singers",
            "SELECT count(*) FROM singer",
        )]);
        assert_eq!(gw.complete(&req("How many singers?")).unwrap(), "SELECT count(*) FROM singer");
        assert_eq!(gw.complete(&req("How many stadiums?")), Err(GatewayError::ScriptedMiss));
        assert_eq!(gw.transcript().len(), 2);
    }

    #[test]
    fn max_uses_falls_through() {
        let gw = ScriptedGateway::new(vec![
            ScriptedRule::contains("q", "first").limited(1),
            ScriptedRule::contains("q", "second"),
        ]);
        assert_eq!(gw.complete(&req("q")).unwrap(), "first");
        assert_eq!(gw.complete(&req("q")).unwrap(), "second");

        let gw = ScriptedGateway::new(vec![ScriptedRule::contains("q", "once").limited(1)]);
        gw.complete(&req("q")).unwrap();
        assert_eq!(gw.complete(&req("q")), Err(GatewayError::ScriptedMiss));
    }

    #[test]
    fn empty_prompt_is_invalid() {
        let gw = ScriptedGateway::new(vec![ScriptedRule::contains("", "x")]);
        assert!(matches!(gw.complete(&req("")), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn transcript_order_and_disable() {
        let gw = ScriptedGateway::new(vec![ScriptedRule::regex("^a", "A").unwrap()]);
        gw.complete(&req("a1")).unwrap();
        gw.complete(&req("a2")).unwrap();
        let prompts: Vec<_> = gw.transcript().into_iter().map(|r| r.request.prompt).collect();
        assert_eq!(prompts, ["a1", "a2"]);

        let quiet = ScriptedGateway::without_recording(vec![ScriptedRule::contains("a", "A")]);
        quiet.complete(&req("a")).unwrap();
        assert!(quiet.transcript().is_empty());
    }

    #[test]
    fn concurrent_calls_are_all_recorded() {
        let gw = Arc::new(ScriptedGateway::new(vec![ScriptedRule::contains("p", "r")]));
        let handles: Vec<_> = (0..16)
            .map(|i| {
                let gw = Arc::clone(&gw);
                std::thread::spawn(move || {
                    for j in 0..25 {
                        gw.complete(&req(&format!("p{i}-{j}"))).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(gw.transcript().len(), 400);
    }

    #[test]
    fn concurrent_use_counters_are_exact() {
        let gw = Arc::new(ScriptedGateway::new(vec![
            ScriptedRule::contains("p", "limited").limited(37),
            ScriptedRule::contains("p", "rest"),
        ]));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let gw = Arc::clone(&gw);
                std::thread::spawn(move || {
                    (0..20).filter(|_| gw.complete(&req("p")).unwrap() == "limited").count()
                })
            })
            .collect();
        let total: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(total, 37);
    }

    #[test]
    fn rule_file_parsing() {
        let gw = ScriptedGateway::from_json(
            r#"{"rules": [{"contains": "x", "response": "1", "max_uses": 1}, {"regex": "^y+$", "response": "2"}]}"#,
        )
        .unwrap();
        assert_eq!(gw.complete(&req("yyy")).unwrap(), "2");
        assert!(ScriptedGateway::from_json(r#"{"rules": [{"response": "1"}]}"#).is_err());
        assert!(ScriptedGateway::from_json(r#"{"rules": [{"regex": "(", "response": "1"}]}"#).is_err());
    }

    /// Serves canned `(status, body)` responses, one per connection, and
    /// counts the requests it saw.
    fn canned_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&hits);
        std::thread::spawn(move || {
            let mut responses = responses.into_iter();
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                counter.fetch_add(1, Ordering::SeqCst);
                let (status, text) = responses.next().unwrap_or((500, "exhausted".into()));
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        (format!("http://{addr}/v1/chat/completions"), hits)
    }

    fn remote(endpoint: String) -> RemoteGateway {
        RemoteGateway::new(RemoteConfig {
            endpoint,
            timeout_secs: 5.0,
            backoff_base_ms: 1,
            ..Default::default()
        })
        .unwrap()
    }

    const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"SELECT 1"}}]}"#;

    #[test]
    fn remote_retries_transient_failures() {
        let (url, hits) = canned_server(vec![
            (503, "busy".into()),
            (502, "bad gateway".into()),
            (200, OK_BODY.into()),
        ]);
        let gw = remote(url);
        assert_eq!(gw.complete(&req("q")).unwrap(), "SELECT 1");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        assert_eq!(gw.transcript().len(), 1);
    }

    #[test]
    fn remote_gives_up_after_three_retries() {
        let (url, hits) = canned_server(vec![(500, "e".into()); 10]);
        let err = remote(url).complete(&req("q")).unwrap_err();
        assert!(matches!(err, GatewayError::Unavailable { attempts: 4, .. }), "{err:?}");
        assert_eq!(hits.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn remote_never_retries_client_errors() {
        let (url, hits) = canned_server(vec![(400, "bad".into()), (200, OK_BODY.into())]);
        let err = remote(url).complete(&req("q")).unwrap_err();
        assert!(matches!(err, GatewayError::Rejected { status: 400, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn remote_deadline() {
        // Accepts connections but never answers.
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let mut held = Vec::new();
            for s in listener.incoming() {
                held.push(s);
            }
        });
        let gw = RemoteGateway::new(RemoteConfig {
            endpoint: format!("http://{addr}/"),
            timeout_secs: 0.3,
            backoff_base_ms: 1,
            ..Default::default()
        })
        .unwrap();
        let started = Instant::now();
        let err = gw.complete(&req("q")).unwrap_err();
        assert!(matches!(err, GatewayError::Timeout(_)), "{err:?}");
        assert!(started.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn content_extraction() {
        assert_eq!(extract_content(OK_BODY).unwrap(), "SELECT 1");
        assert_eq!(extract_content(r#"{"choices":[{"text":"x"}]}"#).unwrap(), "x");
        assert!(extract_content("{}").is_none());
    }
}
