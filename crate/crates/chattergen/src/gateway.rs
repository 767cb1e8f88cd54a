//! Pluggable text-generation backend: an HTTP client speaking the
//! common completions wire protocol, and a deterministic scripted
//! replay backend for tests and offline runs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the API key; its value is never logged.
pub const API_KEY_ENV: &str = "CHATTER_API_KEY";

/// Marker message for a replay script that has run out of entries, so
/// callers can tell exhaustion apart from ordinary backend failures.
pub const REPLAY_EXHAUSTED: &str = "replay script exhausted";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    BadScriptEntry {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Sampling parameters and stop sequences for one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_new_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl GenerationRequest {
    /// Sampling profile used while generating synthetic instances.
    pub fn instance_generation(prompt: String) -> Self {
        GenerationRequest {
            prompt,
            temperature: 0.9,
            top_p: 0.9,
            top_k: 400,
            max_new_tokens: 400,
            stop_sequences: Vec::new(),
        }
    }

    /// Greedy-decoding profile used for context-only evaluation runs:
    /// no nucleus or top-k sampling and no stop sequences.
    pub fn evaluation(prompt: String) -> Self {
        GenerationRequest {
            prompt,
            temperature: 0.0,
            top_p: 1.0,
            top_k: 0,
            max_new_tokens: 400,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_stop(mut self, stop: &[&str]) -> Self {
        self.stop_sequences = stop.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 {
            return Err(format!("temperature {} must be >= 0", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p {} must be in (0, 1]", self.top_p));
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// Outcome of one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    /// Diagnostic message when `finish_reason` is `Error`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationResult {
    fn error(message: String, latency_ms: u64) -> Self {
        GenerationResult {
            text: String::new(),
            finish_reason: FinishReason::Error,
            latency_ms,
            error: Some(message),
        }
    }

    pub fn is_error(&self) -> bool {
        self.finish_reason == FinishReason::Error
    }

    pub fn is_replay_exhausted(&self) -> bool {
        self.error.as_deref() == Some(REPLAY_EXHAUSTED)
    }
}

/// Truncates a completion at the first occurrence of any stop sequence,
/// removing the stop text itself. Idempotent.
pub fn truncate_at_stop(text: &str, stop_sequences: &[String]) -> (String, bool) {
    let mut cut = text.len();
    for stop in stop_sequences {
        if stop.is_empty() {
            continue;
        }
        if let Some(pos) = text.find(stop.as_str()) {
            cut = cut.min(pos);
        }
    }
    (text[..cut].to_string(), cut < text.len())
}

/// A text-completion backend safe for concurrent use.
pub trait TextBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> GenerationResult;
}

/// Counting semaphore bounding in-flight HTTP requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.sem.permits.lock().unwrap() += 1;
        self.sem.cv.notify_one();
    }
}

/// HTTP backend settings. The API key is read from [`API_KEY_ENV`].
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_ms: u64,
    /// Retry budget for timeouts and 5xx responses.
    pub retries: u32,
    /// Base backoff, doubled per retry.
    pub backoff_ms: u64,
    pub max_concurrency: usize,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            base_url: "http://127.0.0.1:8000".into(),
            model: "local".into(),
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 250,
            max_concurrency: 4,
        }
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    top_k: u32,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    stop: Vec<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

enum AttemptOutcome {
    /// Completion text plus the server-reported finish reason.
    Success(String, Option<String>),
    /// Not worth retrying (4xx, malformed body).
    Fatal(String),
    /// Retryable (timeout, connection error, 5xx).
    Retry(String),
}

/// Client for `<base_url>/v1/completions`. Completions are additionally
/// truncated client-side at the first stop sequence, so behaviour does
/// not depend on whether the server honours `stop`.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpBackendConfig,
    api_key: Option<String>,
    semaphore: Semaphore,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .expect("reqwest client");
        let api_key = std::env::var(API_KEY_ENV).ok();
        let semaphore = Semaphore::new(config.max_concurrency);
        HttpBackend {
            client,
            config,
            api_key,
            semaphore,
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, request: &GenerationRequest) -> AttemptOutcome {
        let body = CompletionBody {
            model: &self.config.model,
            prompt: &request.prompt,
            temperature: request.temperature,
            top_p: request.top_p,
            top_k: request.top_k,
            max_tokens: request.max_new_tokens,
            stop: request.stop_sequences.clone(),
        };
        let mut req = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = match req.send() {
            Ok(r) => r,
            Err(e) => return AttemptOutcome::Retry(format!("request failed: {e}")),
        };
        let status = response.status();
        if status.is_server_error() {
            return AttemptOutcome::Retry(format!("server error {status}"));
        }
        if !status.is_success() {
            return AttemptOutcome::Fatal(format!("http status {status}"));
        }
        match response.json::<CompletionResponse>() {
            Ok(parsed) => match parsed.choices.into_iter().next() {
                Some(choice) => AttemptOutcome::Success(choice.text, choice.finish_reason),
                None => AttemptOutcome::Fatal("malformed response body: no choices".into()),
            },
            Err(e) => AttemptOutcome::Fatal(format!("malformed response body: {e}")),
        }
    }
}

impl TextBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> GenerationResult {
        let _permit = self.semaphore.acquire();
        let start = Instant::now();
        if let Err(msg) = request.validate() {
            return GenerationResult::error(msg, 0);
        }
        let mut last_err = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms << (attempt - 1).min(8),
                ));
            }
            match self.attempt(request) {
                AttemptOutcome::Success(text, finish) => {
                    let (text, truncated) = truncate_at_stop(&text, &request.stop_sequences);
                    let finish_reason = match finish.as_deref() {
                        _ if truncated => FinishReason::Stop,
                        Some("length") => FinishReason::Length,
                        _ => FinishReason::Stop,
                    };
                    return GenerationResult {
                        text,
                        finish_reason,
                        latency_ms: start.elapsed().as_millis() as u64,
                        error: None,
                    };
                }
                AttemptOutcome::Fatal(msg) => {
                    return GenerationResult::error(msg, start.elapsed().as_millis() as u64);
                }
                AttemptOutcome::Retry(msg) => last_err = msg,
            }
        }
        GenerationResult::error(
            format!(
                "giving up after {} attempts: {last_err}",
                self.config.retries + 1
            ),
            start.elapsed().as_millis() as u64,
        )
    }
}

/// One scripted completion. When `match` is present the entry is only
/// served to prompts containing that substring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub match_substring: Option<String>,
    pub text: String,
}

struct ReplayState {
    entries: Vec<ReplayEntry>,
    consumed: Vec<bool>,
}

/// Deterministic backend replaying a JSONL script of completions. Each
/// call serves the first unconsumed entry whose `match` (if any) is a
/// substring of the prompt; an exhausted script yields a distinct error.
pub struct ReplayBackend {
    state: Mutex<ReplayState>,
}

impl ReplayBackend {
    pub fn from_entries(entries: Vec<ReplayEntry>) -> Self {
        let consumed = vec![false; entries.len()];
        ReplayBackend {
            state: Mutex::new(ReplayState { entries, consumed }),
        }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry =
                serde_json::from_str(line).map_err(|e| GatewayError::BadScriptEntry {
                    path: path.to_path_buf(),
                    line: i + 1,
                    source: e,
                })?;
            entries.push(entry);
        }
        Ok(ReplayBackend::from_entries(entries))
    }

    /// Marks the first `n` entries consumed. Used when resuming a run so
    /// the script continues where the previous process stopped; assumes
    /// the script was consumed in file order, which holds for scripts
    /// consumed by sequentially processed categories.
    pub fn skip(&self, n: usize) {
        let mut state = self.state.lock().unwrap();
        let len = state.entries.len();
        for flag in state.consumed.iter_mut().take(n.min(len)) {
            *flag = true;
        }
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().unwrap();
        state.consumed.iter().filter(|c| !**c).count()
    }
}

impl TextBackend for ReplayBackend {
    fn generate(&self, request: &GenerationRequest) -> GenerationResult {
        let start = Instant::now();
        let mut state = self.state.lock().unwrap();
        let found = (0..state.entries.len()).find(|&i| {
            !state.consumed[i]
                && state.entries[i]
                    .match_substring
                    .as_deref()
                    .map_or(true, |m| request.prompt.contains(m))
        });
        match found {
            Some(i) => {
                state.consumed[i] = true;
                let (text, _) = truncate_at_stop(&state.entries[i].text, &request.stop_sequences);
                GenerationResult {
                    text,
                    finish_reason: FinishReason::Stop,
                    latency_ms: start.elapsed().as_millis() as u64,
                    error: None,
                }
            }
            None => GenerationResult::error(
                REPLAY_EXHAUSTED.to_string(),
                start.elapsed().as_millis() as u64,
            ),
        }
    }
}

/// Parses a backend selector: `replay:<script path>` or `http:<base url>`.
pub fn backend_from_spec(
    spec: &str,
    http_defaults: HttpBackendConfig,
) -> Result<Box<dyn TextBackend>, String> {
    if let Some(path) = spec.strip_prefix("replay:") {
        let backend =
            ReplayBackend::load(Path::new(path)).map_err(|e| format!("replay backend: {e}"))?;
        return Ok(Box::new(backend));
    }
    if let Some(url) = spec.strip_prefix("http:") {
        let mut config = http_defaults;
        // Accept both "http://host" URLs and a bare "http:host" shorthand.
        config.base_url = if url.starts_with("//") {
            format!("http:{url}")
        } else {
            url.to_string()
        };
        return Ok(Box::new(HttpBackend::new(config)));
    }
    Err(format!(
        "unknown backend {spec:?}; expected replay:<path> or http:<base url>"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_profile_matches_generation_settings() {
        let req = GenerationRequest::instance_generation("p".into());
        assert_eq!(req.temperature, 0.9);
        assert_eq!(req.top_p, 0.9);
        assert_eq!(req.top_k, 400);
        assert_eq!(req.max_new_tokens, 400);
    }

    #[test]
    fn evaluation_profile_is_greedy_without_stops() {
        let req = GenerationRequest::evaluation("p".into());
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req.top_p, 1.0);
        assert_eq!(req.top_k, 0);
        assert_eq!(req.max_new_tokens, 400);
        assert!(req.stop_sequences.is_empty());
    }

    #[test]
    fn stop_truncation_removes_stop_text_and_is_idempotent() {
        let stops = vec!["Context 7:".to_string()];
        let raw = "... Over.\"\nContext 7: {next}";
        let (once, truncated) = truncate_at_stop(raw, &stops);
        assert!(truncated);
        assert_eq!(once, "... Over.\"\n");
        let (twice, again) = truncate_at_stop(&once, &stops);
        assert!(!again);
        assert_eq!(twice, once);
    }

    #[test]
    fn replay_serves_entries_in_order_then_exhausts() {
        let backend = ReplayBackend::from_entries(vec![
            ReplayEntry { match_substring: None, text: "one".into() },
            ReplayEntry { match_substring: None, text: "two".into() },
            ReplayEntry { match_substring: None, text: "three".into() },
        ]);
        let req = GenerationRequest::instance_generation("prompt".into());
        for expected in ["one", "two", "three"] {
            let res = backend.generate(&req);
            assert_eq!(res.text, expected);
            assert!(!res.is_error());
        }
        let res = backend.generate(&req);
        assert!(res.is_error());
        assert!(res.is_replay_exhausted());
    }

    #[test]
    fn replay_match_routes_by_prompt() {
        let backend = ReplayBackend::from_entries(vec![
            ReplayEntry { match_substring: Some("Fire".into()), text: "fire text".into() },
            ReplayEntry { match_substring: None, text: "generic".into() },
        ]);
        let flood = GenerationRequest::instance_generation("about Flooding".into());
        assert_eq!(backend.generate(&flood).text, "generic");
        let fire = GenerationRequest::instance_generation("about Fire".into());
        assert_eq!(backend.generate(&fire).text, "fire text");
        assert_eq!(backend.remaining(), 0);
    }

    #[test]
    fn skip_fast_forwards_consumption() {
        let backend = ReplayBackend::from_entries(vec![
            ReplayEntry { match_substring: None, text: "a".into() },
            ReplayEntry { match_substring: None, text: "b".into() },
        ]);
        backend.skip(1);
        let req = GenerationRequest::instance_generation("p".into());
        assert_eq!(backend.generate(&req).text, "b");
    }

    #[test]
    fn invalid_request_is_rejected() {
        let mut req = GenerationRequest::instance_generation("p".into());
        req.top_p = 0.0;
        assert!(req.validate().is_err());
        req.top_p = 0.5;
        req.temperature = -1.0;
        assert!(req.validate().is_err());
    }

    #[test]
    fn backend_spec_parsing() {
        assert!(backend_from_spec("carrier:x", HttpBackendConfig::default()).is_err());
        assert!(backend_from_spec("replay:/nonexistent.jsonl", HttpBackendConfig::default()).is_err());
        assert!(backend_from_spec("http://localhost:9", HttpBackendConfig::default()).is_ok());
    }
}
