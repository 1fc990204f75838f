//! Completion and embedding providers.
//!
//! [`CompletionProvider`] abstracts the language model. Two implementations
//! ship here: [`ScriptedProvider`], which replays a `.mock.json` script and
//! counts its calls, and [`ChatCompletionClient`], which talks JSON over
//! HTTP to any chat-completions style endpoint.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::text::tokenize;

/// Environment variable holding the API key of the HTTP adapter.
pub const API_KEY_ENV: &str = "LEXGRAPH_API_KEY";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("provider failure: {message}")]
pub struct ProviderError {
    pub message: String,
}

impl ProviderError {
    pub fn new(message: impl Into<String>) -> Self {
        ProviderError {
            message: message.into(),
        }
    }
}

/// Prompt in, response out. Implementations must tolerate concurrent calls.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

/// One step of a mock script: a canned response or a simulated failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Respond(String),
    Fail { error: String },
}

/// Replays a fixed script, one step per call. Once the script is used up
/// the last step repeats.
#[derive(Debug)]
pub struct ScriptedProvider {
    steps: Vec<ScriptStep>,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        ScriptedProvider {
            steps,
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(responses.into_iter().map(|r| ScriptStep::Respond(r.into())).collect())
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(json)?))
    }

    pub fn from_path(path: &Path) -> Result<Self, ProviderError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::new(format!("{}: {e}", path.display())))?;
        Self::from_json(&raw).map_err(|e| ProviderError::new(format!("{}: {e}", path.display())))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every prompt received so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().map(|p| p.clone()).unwrap_or_default()
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        if let Ok(mut p) = self.prompts.lock() {
            p.push(prompt.to_string());
        }
        let step = self
            .steps
            .get(i)
            .or_else(|| self.steps.last())
            .ok_or_else(|| ProviderError::new("mock script is empty"))?;
        match step {
            ScriptStep::Respond(r) => Ok(r.clone()),
            ScriptStep::Fail { error } => Err(ProviderError::new(error.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatClientConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        ChatClientConfig {
            endpoint: "http://localhost:8080/v1/chat/completions".into(),
            model: "legal-analysis".into(),
            temperature: 0.0,
            timeout_secs: 120,
        }
    }
}

/// Chat-completions client. The prompt is sent as a single user message;
/// the reply is read from `choices[0].message.content`.
pub struct ChatCompletionClient {
    config: ChatClientConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    trace: Option<Mutex<Box<dyn Write + Send>>>,
}

impl ChatCompletionClient {
    pub fn new(config: ChatClientConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        ChatCompletionClient {
            config,
            api_key,
            agent,
            trace: None,
        }
    }

    /// Reads the API key from `LEXGRAPH_API_KEY`.
    pub fn from_env(config: ChatClientConfig) -> Self {
        Self::new(config, std::env::var(API_KEY_ENV).ok())
    }

    /// Appends one JSON line per exchange (request body, response body) to
    /// `sink`.
    pub fn with_trace(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.trace = Some(Mutex::new(sink));
        self
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        })
    }

    fn log(&self, request: &Value, response: &Value) {
        if let Some(trace) = &self.trace {
            if let Ok(mut sink) = trace.lock() {
                let line = json!({"request": request, "response": response});
                let _ = writeln!(sink, "{line}");
            }
        }
    }
}

impl CompletionProvider for ChatCompletionClient {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = self.request_body(prompt);
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let payload = serde_json::to_vec(&body).map_err(|e| ProviderError::new(e.to_string()))?;
        let mut resp = req
            .header("Content-Type", "application/json")
            .send(&payload[..])
            .map_err(|e| ProviderError::new(format!("request to {} failed: {e}", self.config.endpoint)))?;
        let status = resp.status();
        let reply: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::new(format!("unreadable response body: {e}")))?;
        self.log(&body, &reply);
        if !status.is_success() {
            return Err(ProviderError::new(format!("endpoint returned {status}: {reply}")));
        }
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::new("response has no choices[0].message.content"))
    }
}

/// Text to dense vector.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

/// Signed feature hashing of tokens into a fixed number of buckets,
/// L2-normalized. Deterministic across platforms (FNV-1a 64). Text with no
/// tokens maps to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for t in tokenize(text) {
            let h = fnv1a(t.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

impl TextEmbedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        Ok(self.embed_text(text))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;

    #[test]
    fn scripted_provider_replays_and_counts() {
        let p = ScriptedProvider::from_responses(["one", "two"]);
        assert_eq!(p.complete("a").unwrap(), "one");
        assert_eq!(p.complete("b").unwrap(), "two");
        assert_eq!(p.complete("c").unwrap(), "two");
        assert_eq!(p.calls(), 3);
        assert_eq!(p.prompts(), ["a", "b", "c"]);
    }

    #[test]
    fn script_file_supports_failures() {
        let p = ScriptedProvider::from_json(r#"["ok", {"error": "rate limited"}]"#).unwrap();
        assert_eq!(p.complete("x").unwrap(), "ok");
        assert_eq!(p.complete("x").unwrap_err().message, "rate limited");
        let empty = ScriptedProvider::new(vec![]);
        assert!(empty.complete("x").is_err());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn hashing_embedder_is_normalized_and_deterministic() {
        let e = HashingEmbedder::new(16);
        let a = e.embed_text("Breach of contract damages");
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(a, e.embed_text("breach, of CONTRACT damages!"));
        assert!(e.embed_text("").iter().all(|x| *x == 0.0));
    }

    // Minimal one-shot HTTP server answering a single request.
    fn serve_once(status: &str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let status = status.to_string();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut req_body = vec![0; len];
            reader.read_exact(&mut req_body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            format!("{head}{}", String::from_utf8(req_body).unwrap())
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    #[derive(Clone, Default)]
    struct SharedBuf(std::sync::Arc<Mutex<Vec<u8>>>);
    impl Write for SharedBuf {
        fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(b);
            Ok(b.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn chat_client_round_trip() {
        let (url, server) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"analysis [CC-1382]"}}]}"#,
        );
        let trace = SharedBuf::default();
        let client = ChatCompletionClient::new(
            ChatClientConfig {
                endpoint: url,
                model: "m1".into(),
                ..Default::default()
            },
            Some("secret".into()),
        )
        .with_trace(Box::new(trace.clone()));
        assert_eq!(client.complete("the prompt").unwrap(), "analysis [CC-1382]");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /v1/chat/completions"));
        assert!(request.to_ascii_lowercase().contains("authorization: bearer secret"));
        assert!(request.contains(r#""content":"the prompt""#));
        assert!(request.contains(r#""model":"m1""#));
        let logged = String::from_utf8(trace.0.lock().unwrap().clone()).unwrap();
        let line: Value = serde_json::from_str(logged.trim()).unwrap();
        assert_eq!(line["request"]["messages"][0]["content"], "the prompt");
        assert_eq!(line["response"]["choices"][0]["message"]["content"], "analysis [CC-1382]");
    }

    #[test]
    fn chat_client_surfaces_http_errors() {
        let (url, server) = serve_once("500 Internal Server Error", r#"{"error":"boom"}"#);
        let client = ChatCompletionClient::new(
            ChatClientConfig {
                endpoint: url,
                ..Default::default()
            },
            None,
        );
        let err = client.complete("p").unwrap_err();
        assert!(err.message.contains("500"), "{err}");
        server.join().unwrap();
    }
}
