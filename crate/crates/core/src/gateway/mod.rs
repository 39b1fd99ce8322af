//! Chat-completions client with an on-disk response cache, retries, bounded
//! parallelism and usage accounting.

mod cache;
mod http;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use self::cache::DiskCache;
pub use self::http::{HttpTransport, Transport, TransportError, WireResponse};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("endpoint rejected credentials (HTTP {0})")]
    Auth(u16),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed endpoint reply: {0}")]
    Malformed(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    #[default]
    User,
    System,
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_tokens() -> u32 {
    4096
}
fn default_timeout() -> f64 {
    300.0
}
fn default_retries() -> u32 {
    5
}
fn default_backoff_base() -> u64 {
    1000
}
fn default_backoff_max() -> u64 {
    60_000
}

/// Endpoint, sampling and pricing for one model. Loaded from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// USD per million prompt tokens.
    #[serde(default)]
    pub price_in: f64,
    /// USD per million completion tokens.
    #[serde(default)]
    pub price_out: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_max")]
    pub backoff_max_ms: u64,
    /// Role of the single message carrying the prompt.
    #[serde(default)]
    pub role: MessageRole,
}

impl ModelConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ModelConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            api_key_env: None,
            price_in: 0.0,
            price_out: 0.0,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff_base(),
            backoff_max_ms: default_backoff_max(),
            role: MessageRole::User,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if self.model_name.is_empty() {
            return bad("model_name is empty");
        }
        if self.base_url.is_empty() {
            return bad("base_url is empty");
        }
        if !(self.price_in.is_finite() && self.price_in >= 0.0)
            || !(self.price_out.is_finite() && self.price_out >= 0.0)
        {
            return bad("prices must be finite and non-negative");
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        (prompt_tokens as f64 * self.price_in + completion_tokens as f64 * self.price_out) / 1e6
    }

    /// Hex SHA-256 over the model name, sampling parameters, message role
    /// and prompt.
    pub fn cache_key(&self, prompt: &str) -> String {
        let mut h = Sha256::new();
        for part in [
            self.model_name.as_str(),
            &self.temperature.to_string(),
            &self.max_tokens.to_string(),
            match self.role {
                MessageRole::User => "user",
                MessageRole::System => "system",
            },
            prompt,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        serde_json::json!({
            "model": self.model_name,
            "messages": [{ "role": self.role, "content": prompt }],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }

    pub fn endpoint_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    /// The config with the credential reference removed, for manifests.
    pub fn redacted(&self) -> ModelConfig {
        ModelConfig {
            api_key_env: None,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub retries: u32,
    pub cache_hit: bool,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub entries: Vec<UsageEntry>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
    pub cache_hits: usize,
    pub failures: usize,
    pub retries: u64,
    /// Sum of per-request latencies.
    pub latency_ms: u64,
    /// Elapsed time for the whole batch.
    pub wall_ms: u64,
}

impl UsageLedger {
    pub fn from_entries(entries: Vec<UsageEntry>, wall: Duration) -> UsageLedger {
        let mut l = UsageLedger {
            wall_ms: wall.as_millis() as u64,
            ..UsageLedger::default()
        };
        for e in &entries {
            l.prompt_tokens += e.prompt_tokens;
            l.completion_tokens += e.completion_tokens;
            l.cost += e.cost;
            l.cache_hits += usize::from(e.cache_hit);
            l.failures += usize::from(e.error.is_some());
            l.retries += u64::from(e.retries);
            l.latency_ms += e.latency_ms;
        }
        l.entries = entries;
        l
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: UsageEntry,
}

/// Anything that turns a prompt into a reply.
pub trait Completer: Sync {
    fn complete(&self, prompt: &str) -> Result<Completion, (GatewayError, UsageEntry)>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedReply {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Pulls the reply text and token usage out of a chat-completions body.
pub fn parse_reply(body: &str) -> Result<CachedReply, GatewayError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GatewayError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .ok_or_else(|| GatewayError::Malformed("no choices[0].message.content".into()))?;
    let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(|n| n.as_u64()).unwrap_or(0);
    Ok(CachedReply {
        content: content.to_string(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
    })
}

pub struct Gateway<T: Transport> {
    config: ModelConfig,
    transport: T,
    cache: Option<DiskCache>,
    api_key: Option<String>,
}

impl<T: Transport> Gateway<T> {
    pub fn new(config: ModelConfig, transport: T, cache: Option<DiskCache>) -> Result<Self, GatewayError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| GatewayError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        Ok(Gateway {
            config,
            transport,
            cache,
            api_key,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.config.backoff_base_ms.saturating_mul(1u64 << attempt.min(20));
        let capped = base.min(self.config.backoff_max_ms);
        let jitter: f64 = rand::rng().random_range(0.5..=1.0);
        Duration::from_millis((capped as f64 * jitter) as u64)
    }

    fn fetch(&self, prompt: &str, retries: &mut u32) -> Result<CachedReply, GatewayError> {
        let body = self.config.request_body(prompt).to_string();
        let url = self.config.endpoint_url();
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let mut attempt = 0;
        loop {
            let last = match self.transport.post(&url, &body, self.api_key.as_deref(), timeout) {
                Ok(WireResponse { status: 200..=299, body }) => return parse_reply(&body),
                Ok(WireResponse { status: s @ (401 | 403), .. }) => return Err(GatewayError::Auth(s)),
                Ok(WireResponse { status: s @ (429 | 500..=599), body }) => {
                    format!("HTTP {s}: {}", truncate(&body))
                }
                Ok(WireResponse { status, body }) => {
                    return Err(GatewayError::Http {
                        status,
                        body: truncate(&body),
                    })
                }
                Err(TransportError::Timeout) => "timeout".to_string(),
                Err(TransportError::Connect(m)) => m,
                Err(TransportError::Other(m)) => return Err(GatewayError::Transport(m)),
            };
            if attempt >= self.config.max_retries {
                return Err(GatewayError::RetriesExhausted {
                    attempts: attempt + 1,
                    last,
                });
            }
            log::warn!("retrying after {last}");
            std::thread::sleep(self.backoff(attempt));
            attempt += 1;
            *retries = attempt;
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

impl<T: Transport> Completer for Gateway<T> {
    fn complete(&self, prompt: &str) -> Result<Completion, (GatewayError, UsageEntry)> {
        let start = Instant::now();
        let key = self.config.cache_key(prompt);
        if let Some(cache) = &self.cache {
            match cache.get(&key) {
                Ok(Some(hit)) => {
                    return Ok(Completion {
                        text: hit.content,
                        usage: UsageEntry {
                            prompt_tokens: hit.prompt_tokens,
                            completion_tokens: hit.completion_tokens,
                            latency_ms: start.elapsed().as_millis() as u64,
                            cache_hit: true,
                            ..UsageEntry::default()
                        },
                    })
                }
                Ok(None) => {}
                Err(e) => log::warn!("ignoring unreadable cache entry {key}: {e}"),
            }
        }
        let mut retries = 0;
        let result = self.fetch(prompt, &mut retries);
        let latency_ms = start.elapsed().as_millis() as u64;
        match result {
            Ok(reply) => {
                if let Some(cache) = &self.cache {
                    if let Err(e) = cache.put(&key, &reply) {
                        log::warn!("could not cache {key}: {e}");
                    }
                }
                Ok(Completion {
                    usage: UsageEntry {
                        prompt_tokens: reply.prompt_tokens,
                        completion_tokens: reply.completion_tokens,
                        latency_ms,
                        retries,
                        cache_hit: false,
                        cost: self.config.cost(reply.prompt_tokens, reply.completion_tokens),
                        error: None,
                    },
                    text: reply.content,
                })
            }
            Err(e) => Err((
                e.clone(),
                UsageEntry {
                    latency_ms,
                    retries,
                    error: Some(e.to_string()),
                    ..UsageEntry::default()
                },
            )),
        }
    }
}

pub struct BatchOutcome {
    pub results: Vec<Result<String, GatewayError>>,
    pub ledger: UsageLedger,
}

/// Completes every prompt with at most `parallelism` requests in flight.
/// Results keep input order; failures are reported per index.
pub fn run_batch<C: Completer + ?Sized>(completer: &C, prompts: &[String], parallelism: usize) -> BatchOutcome {
    let start = Instant::now();
    let workers = parallelism.max(1).min(prompts.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<(Result<String, GatewayError>, UsageEntry)>>> =
        Mutex::new(vec![None; prompts.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(prompt) = prompts.get(i) else { break };
                let out = match completer.complete(prompt) {
                    Ok(c) => (Ok(c.text), c.usage),
                    Err((e, usage)) => (Err(e), usage),
                };
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
            });
        }
    });
    let (results, entries): (Vec<_>, Vec<_>) = slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|s| s.expect("every index completed"))
        .unzip();
    BatchOutcome {
        results,
        ledger: UsageLedger::from_entries(entries, start.elapsed()),
    }
}
