//! Text-generation backends: HTTP chat completions, replay cache, oracle and
//! a fixed stub.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formulations::{Formulation, PromptInstance};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("permanent backend failure: {0}")]
    Permanent(String),
    #[error("no cached completion for key {0}")]
    CacheMiss(String),
    #[error("request timed out")]
    Timeout,
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid request {id}: {reason}")]
    InvalidRequest { id: String, reason: String },
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ClientError {
    fn retryable(&self) -> bool {
        matches!(self, ClientError::Transient(_) | ClientError::Timeout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    Replay,
    Oracle,
    StubFixed,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Http => "http",
            BackendKind::Replay => "replay",
            BackendKind::Oracle => "oracle",
            BackendKind::StubFixed => "stub-fixed",
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(BackendKind::Http),
            "replay" => Ok(BackendKind::Replay),
            "oracle" => Ok(BackendKind::Oracle),
            "stub-fixed" | "stub" => Ok(BackendKind::StubFixed),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): base, 2·base, 4·base...
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(16);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding a bearer token.
    pub auth_env: Option<String>,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Replay cache; also written by the http backend when set.
    pub cache_path: Option<PathBuf>,
    pub timeout_ms: u64,
    /// Completion returned by the stub backend.
    pub stub_completion: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Oracle,
            endpoint: None,
            model: None,
            auth_env: None,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            cache_path: None,
            timeout_ms: 120_000,
            stub_completion: String::new(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        match self.kind {
            BackendKind::Http if self.endpoint.as_deref().unwrap_or("").is_empty() => Err(
                ClientError::InvalidConfig("http backend requires an endpoint".into()),
            ),
            BackendKind::Replay if self.cache_path.is_none() => Err(ClientError::InvalidConfig(
                "replay backend requires a cache path".into(),
            )),
            _ if self.max_in_flight == 0 => Err(ClientError::InvalidConfig(
                "max_in_flight must be at least 1".into(),
            )),
            _ if self.retry.max_attempts == 0 => Err(ClientError::InvalidConfig(
                "retry.max_attempts must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Identifier recorded in responses and run manifests.
    pub fn backend_id(&self) -> String {
        match (&self.kind, &self.model) {
            (BackendKind::Http, Some(m)) => format!("http:{m}"),
            (kind, _) => kind.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Decoding {
    #[default]
    Greedy,
    Sample {
        temperature: f64,
    },
}

impl Decoding {
    fn temperature(&self) -> f64 {
        match self {
            Decoding::Greedy => 0.0,
            Decoding::Sample { temperature } => *temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub request_id: String,
    pub prompt: String,
    pub max_new_tokens: u32,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default)]
    pub stop: Vec<String>,
    /// Gold continuation, used only by the oracle backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_answer: Option<String>,
}

/// Default generation length per formulation.
pub fn default_max_new_tokens(formulation: Formulation) -> u32 {
    match formulation {
        Formulation::Nli | Formulation::Pairwise => 16,
        Formulation::Mrc => 128,
        Formulation::Timeline => 512,
    }
}

impl GenerationRequest {
    pub fn new(
        request_id: impl Into<String>,
        prompt: impl Into<String>,
        max_new_tokens: u32,
    ) -> Self {
        GenerationRequest {
            request_id: request_id.into(),
            prompt: prompt.into(),
            max_new_tokens,
            decoding: Decoding::Greedy,
            stop: Vec::new(),
            oracle_answer: None,
        }
    }

    /// Request for a rendered instance, carrying its gold continuation.
    pub fn for_instance(instance: &PromptInstance) -> Self {
        let mut req = GenerationRequest::new(
            instance.instance_id.clone(),
            instance.prompt.clone(),
            default_max_new_tokens(instance.formulation),
        );
        req.oracle_answer = Some(instance.gold_text.clone());
        req
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let reason = if self.prompt.is_empty() {
            "empty prompt"
        } else if self.max_new_tokens == 0 {
            "max_new_tokens must be positive"
        } else {
            return Ok(());
        };
        Err(ClientError::InvalidRequest {
            id: self.request_id.clone(),
            reason: reason.into(),
        })
    }

    fn params(&self, model: Option<&str>) -> Value {
        json!({
            "model": model,
            "max_new_tokens": self.max_new_tokens,
            "decoding": self.decoding,
            "stop": self.stop,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub request_id: String,
    pub completion: String,
    pub latency_ms: u64,
    pub backend: String,
    pub cache_hit: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of a prompt and its decoding parameters.
pub fn cache_key(prompt: &str, params: &Value) -> String {
    // serde_json maps are ordered, so the encoding is canonical
    let canonical = json!({ "prompt": prompt, "params": params }).to_string();
    sha256_hex(canonical.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub prompt_hash: String,
    pub completion: String,
    pub params: Value,
    pub timestamp: String,
}

/// Append-only JSON-lines completion cache.
#[derive(Debug)]
pub struct ReplayCache {
    path: PathBuf,
    entries: RwLock<HashMap<String, String>>,
    file: Mutex<Option<File>>,
}

impl ReplayCache {
    pub fn open(path: &Path) -> Result<Self, ClientError> {
        let mut entries = HashMap::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, e.completion);
                    }
                    Err(err) => {
                        log::warn!("{}:{}: skipping cache line: {err}", path.display(), n + 1)
                    }
                }
            }
        }
        Ok(ReplayCache {
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            file: Mutex::new(None),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, prompt: &str, params: Value, completion: &str) -> Result<(), ClientError> {
        let key = cache_key(prompt, &params);
        let entry = CacheEntry {
            key: key.clone(),
            prompt_hash: sha256_hex(prompt.as_bytes()),
            completion: completion.to_string(),
            params,
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        let mut file = self.file.lock().expect("cache file lock");
        if file.is_none() {
            if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            *file = Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)?,
            );
        }
        let f = file.as_mut().expect("opened above");
        writeln!(
            f,
            "{}",
            serde_json::to_string(&entry).expect("entry serializes")
        )?;
        f.flush()?;
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, completion.to_string());
        Ok(())
    }
}

/// Cuts `text` at the earliest stop sequence.
fn apply_stop(text: &str, stop: &[String]) -> String {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

/// Outcome of a batch: responses in input order plus failed request ids.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub responses: Vec<GenerationResponse>,
    pub failures: Vec<(String, ClientError)>,
}

impl BatchOutcome {
    pub fn failed_ids(&self) -> Vec<&str> {
        self.failures.iter().map(|(id, _)| id.as_str()).collect()
    }
}

pub struct ModelClient {
    config: BackendConfig,
    cache: Option<ReplayCache>,
    agent: Option<ureq::Agent>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl ModelClient {
    pub fn new(config: BackendConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let cache = match (&config.cache_path, config.kind) {
            (Some(p), BackendKind::Http | BackendKind::Replay) => Some(ReplayCache::open(p)?),
            _ => None,
        };
        let agent = (config.kind == BackendKind::Http).then(|| {
            ureq::Agent::new_with_config(
                ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
                    .http_status_as_error(false)
                    .build(),
            )
        });
        Ok(ModelClient {
            config,
            cache,
            agent,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&ReplayCache> {
        self.cache.as_ref()
    }

    /// Highest number of simultaneously outstanding requests seen so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ClientError> {
        request.validate()?;
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let started = Instant::now();
        let result = self.dispatch(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let (completion, cache_hit) = result?;
        Ok(GenerationResponse {
            request_id: request.request_id.clone(),
            completion,
            latency_ms: started.elapsed().as_millis() as u64,
            backend: self.config.backend_id(),
            cache_hit,
        })
    }

    fn dispatch(&self, request: &GenerationRequest) -> Result<(String, bool), ClientError> {
        let params = request.params(self.config.model.as_deref());
        let key = cache_key(&request.prompt, &params);
        match self.config.kind {
            BackendKind::Oracle => request
                .oracle_answer
                .clone()
                .map(|a| (a, false))
                .ok_or_else(|| {
                    ClientError::Permanent(format!(
                        "request {} has no gold answer",
                        request.request_id
                    ))
                }),
            BackendKind::StubFixed => Ok((self.config.stub_completion.clone(), false)),
            BackendKind::Replay => {
                let cache = self.cache.as_ref().expect("replay has a cache");
                cache
                    .get(&key)
                    .map(|c| (c, true))
                    .ok_or(ClientError::CacheMiss(key))
            }
            BackendKind::Http => {
                if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
                    return Ok((hit, true));
                }
                let completion = self.post_with_retry(request)?;
                if let Some(cache) = &self.cache {
                    cache.insert(&request.prompt, params, &completion)?;
                }
                Ok((completion, false))
            }
        }
    }

    fn post_with_retry(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let policy = &self.config.retry;
        let mut attempt = 1;
        loop {
            match self.post(request) {
                Err(e) if e.retryable() && attempt < policy.max_attempts => {
                    let delay = policy.delay(attempt);
                    log::warn!(
                        "request {} attempt {attempt} failed ({e}); retrying in {delay:?}",
                        request.request_id
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let agent = self.agent.as_ref().expect("http backend has an agent");
        let endpoint = self.config.endpoint.as_deref().expect("validated");
        let mut body = json!({
            "messages": [{ "role": "user", "content": request.prompt }],
            "max_tokens": request.max_new_tokens,
            "temperature": request.decoding.temperature(),
        });
        if let Some(m) = &self.config.model {
            body["model"] = json!(m);
        }
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        let mut req = agent.post(endpoint);
        if let Some(var) = &self.config.auth_env {
            let token = std::env::var(var).map_err(|_| {
                ClientError::InvalidConfig(format!("auth variable {var} is not set"))
            })?;
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout,
            ureq::Error::BadUri(u) => ClientError::InvalidConfig(format!("bad endpoint {u}")),
            other => ClientError::Transient(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transient(format!("reading body: {e}")))?;
        match status {
            200..=299 => {}
            408 | 425 | 429 | 500..=599 => {
                return Err(ClientError::Transient(format!("HTTP {status}: {text}")))
            }
            _ => return Err(ClientError::Permanent(format!("HTTP {status}: {text}"))),
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| ClientError::Permanent(format!("response is not JSON: {e}")))?;
        let choice = &value["choices"][0];
        let completion = choice["message"]["content"]
            .as_str()
            .or_else(|| choice["text"].as_str())
            .ok_or_else(|| ClientError::Permanent("response has no completion".into()))?;
        Ok(apply_stop(completion, &request.stop))
    }

    /// Runs `requests` with at most `max_in_flight` outstanding at once.
    pub fn generate_batch(
        &self,
        requests: &[GenerationRequest],
    ) -> Result<BatchOutcome, ClientError> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = requests
            .iter()
            .find(|r| !seen.insert(r.request_id.as_str()))
        {
            return Err(ClientError::InvalidRequest {
                id: dup.request_id.clone(),
                reason: "duplicate request id in batch".into(),
            });
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<GenerationResponse, ClientError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.config.max_in_flight.min(requests.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(req) = requests.get(i) else { break };
                    let result = self.generate(req);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        let mut outcome = BatchOutcome::default();
        for (req, slot) in requests.iter().zip(slots) {
            match slot
                .into_inner()
                .expect("slot lock")
                .expect("every request ran")
            {
                Ok(r) => outcome.responses.push(r),
                Err(e) => outcome.failures.push((req.request_id.clone(), e)),
            }
        }
        Ok(outcome)
    }
}

/// One-off request against a fresh client.
pub fn generate(
    config: &BackendConfig,
    request: &GenerationRequest,
) -> Result<GenerationResponse, ClientError> {
    ModelClient::new(config.clone())?.generate(request)
}

pub fn generate_batch(
    config: &BackendConfig,
    requests: &[GenerationRequest],
) -> Result<BatchOutcome, ClientError> {
    ModelClient::new(config.clone())?.generate_batch(requests)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_key_is_stable() {
        let p = json!({"a": 1, "b": [1, 2]});
        let k = cache_key("hello", &p);
        assert_eq!(k, cache_key("hello", &json!({"b": [1, 2], "a": 1})));
        assert_ne!(k, cache_key("hello!", &p));
        assert_eq!(k.len(), 64);
    }

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy {
            max_attempts: 4,
            backoff_base_ms: 10,
        };
        assert_eq!(r.delay(1), Duration::from_millis(10));
        assert_eq!(r.delay(3), Duration::from_millis(40));
    }

    #[test]
    fn stop_sequences_truncate() {
        let stop = vec!["\n\n".to_string(), "###".to_string()];
        assert_eq!(apply_stop("AFTER\n\nnext", &stop), "AFTER");
        assert_eq!(apply_stop("x ### y\n\n", &stop), "x ");
        assert_eq!(apply_stop("plain", &[]), "plain");
    }

    #[test]
    fn config_validation() {
        let http = BackendConfig {
            kind: BackendKind::Http,
            ..BackendConfig::default()
        };
        assert!(matches!(
            http.validate(),
            Err(ClientError::InvalidConfig(_))
        ));
        let replay = BackendConfig {
            kind: BackendKind::Replay,
            ..BackendConfig::default()
        };
        assert!(matches!(
            replay.validate(),
            Err(ClientError::InvalidConfig(_))
        ));
        assert!(BackendConfig::default().validate().is_ok());
    }

    #[test]
    fn request_validation() {
        let r = GenerationRequest::new("a", "", 4);
        assert!(matches!(
            r.validate(),
            Err(ClientError::InvalidRequest { .. })
        ));
        let r = GenerationRequest::new("a", "x", 0);
        assert!(r.validate().is_err());
    }
}
