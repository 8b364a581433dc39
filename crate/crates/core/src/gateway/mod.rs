//! Black-box access to vision-language models: backends, retries, rate
//! limiting, conversations and stance parsing.

mod http;
mod limiter;
mod scripted;
mod stance;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Pacer, RealPacer};
use crate::protocol::{Decoding, MessageKind, Role};

pub use http::{GeminiBackend, HttpResponse, HttpTransport, OpenAiBackend, TransportError, UreqTransport};
pub use limiter::TokenBucket;
pub use scripted::{Script, ScriptedBackend};
pub use stance::parse_stance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    OpenaiCompatibleHttp,
    GeminiStyleHttp,
    Scripted,
}

impl BackendKind {
    pub fn is_http(self) -> bool {
        !matches!(self, BackendKind::Scripted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrySpec {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
}

impl Default for RetrySpec {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_base_ms: 500,
            backoff_cap_ms: 30_000,
        }
    }
}

impl RetrySpec {
    /// Delay before retry number `retry` (0-based), ignoring server hints.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_cap_ms))
    }
}

/// How to reach one model. Holds the name of the credential variable, never its value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env_var: Option<String>,
    /// Requests per minute; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<u32>,
    #[serde(default)]
    pub retry: RetrySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

impl BackendSpec {
    pub fn scripted(id: &str, script: impl Into<PathBuf>) -> Self {
        Self {
            id: id.to_string(),
            kind: BackendKind::Scripted,
            endpoint: None,
            model: None,
            credential_env_var: None,
            rate_limit: None,
            retry: RetrySpec::default(),
            script: Some(script.into()),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn http(id: &str, kind: BackendKind, endpoint: &str, model: &str, credential_env_var: &str) -> Self {
        Self {
            id: id.to_string(),
            kind,
            endpoint: Some(endpoint.to_string()),
            model: Some(model.to_string()),
            credential_env_var: Some(credential_env_var.to_string()),
            rate_limit: None,
            retry: RetrySpec::default(),
            script: None,
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |msg: &str| GatewayError::InvalidSpec {
            id: self.id.clone(),
            reason: msg.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(invalid("backend id must not be empty"));
        }
        if self.kind.is_http() {
            if self.endpoint.as_deref().map_or(true, |e| e.trim().is_empty()) {
                return Err(invalid("HTTP backends need an endpoint"));
            }
            if self.credential_env_var.as_deref().map_or(true, |e| e.trim().is_empty()) {
                return Err(invalid("HTTP backends need credential_env_var"));
            }
        } else if self.script.is_none() {
            return Err(invalid("scripted backends need a script file"));
        }
        if self.rate_limit == Some(0) {
            return Err(invalid("rate_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
            image_ref: None,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            text: text.into(),
            image_ref: None,
        }
    }
}

/// Where in a debate a request comes from; scripted backends key replies on it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RequestContext {
    pub item_id: String,
    pub round: u32,
    pub message_kind: Option<MessageKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub role: Role,
    pub system_prompt: String,
    /// Prior exchanges followed by the new user message.
    pub messages: Vec<ChatMessage>,
    pub decoding: Decoding,
    pub backend_id: String,
    pub context: RequestContext,
}

impl AgentRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |reason: &str| GatewayError::InvalidRequest(reason.to_string());
        match self.messages.last() {
            Some(m) if m.role == ChatRole::User && !m.text.trim().is_empty() => {}
            _ => return Err(invalid("the last message must be a non-empty user prompt")),
        }
        if self.messages.iter().filter(|m| m.image_ref.is_some()).count() > 1 {
            return Err(invalid("at most one image per request"));
        }
        if !(0.0..=2.0).contains(&self.decoding.temperature) {
            return Err(invalid("temperature must be within [0, 2]"));
        }
        if self.decoding.max_tokens == 0 {
            return Err(invalid("max_tokens must be positive"));
        }
        Ok(())
    }

    pub fn prompt(&self) -> &str {
        self.messages.last().map(|m| m.text.as_str()).unwrap_or("")
    }

    pub fn image_ref(&self) -> Option<&str> {
        self.messages.iter().find_map(|m| m.image_ref.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub text: String,
    pub latency_ms: u64,
    pub truncated: bool,
    pub attempt_count: u32,
    pub backend_meta: BTreeMap<String, serde_json::Value>,
}

/// What a backend produced for a single attempt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendReply {
    pub text: String,
    pub truncated: bool,
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug)]
pub enum AttemptError {
    /// Worth another try, after at least `retry_after` if the server said so.
    Retryable {
        status: Option<u16>,
        retry_after: Option<Duration>,
        message: String,
    },
    Fatal(GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("unknown backend {0}")]
    UnknownBackend(String),
    #[error("backend id {0} is already registered")]
    DuplicateBackend(String),
    #[error("environment variable {var} (credential for backend {id}) is not set")]
    MissingCredential { id: String, var: String },
    #[error("backend {id}: {reason}")]
    InvalidSpec { id: String, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request failed after {attempts} attempts: {message}")]
    RetriesExhausted { attempts: u32, message: String },
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("image {image}: {reason}")]
    Image { image: String, reason: String },
    #[error("script has no reply left for {key}")]
    ScriptExhausted { key: String },
    #[error("script error: {0}")]
    Script(String),
}

/// A model endpoint able to answer one request per call.
pub trait Backend: Send + Sync {
    fn call(&self, request: &AgentRequest) -> Result<BackendReply, AttemptError>;
}

/// One entry of the attempt log. Carries no prompt text and no headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub backend_id: String,
    pub role: Role,
    pub item_id: String,
    pub attempt: u32,
    pub status: Option<u16>,
    pub outcome: AttemptOutcome,
    pub delay_before_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Success,
    Retryable,
    Fatal,
}

struct Registered {
    spec: BackendSpec,
    backend: Arc<dyn Backend>,
    limiter: Option<TokenBucket>,
}

/// Shared by every concurrent debate. Only the rate limiters and the attempt
/// log change after registration.
pub struct Gateway {
    backends: RwLock<BTreeMap<String, Arc<Registered>>>,
    pacer: Arc<dyn Pacer>,
    log: Mutex<Vec<AttemptRecord>>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backends", &self.backend_ids())
            .finish_non_exhaustive()
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

fn process_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

impl Gateway {
    pub fn new() -> Self {
        Self::with_pacer(Arc::new(RealPacer::default()))
    }

    pub fn with_pacer(pacer: Arc<dyn Pacer>) -> Self {
        Self {
            backends: RwLock::new(BTreeMap::new()),
            pacer,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Register using process environment variables and the default HTTP client.
    pub fn register_backend(&self, spec: BackendSpec) -> Result<String, GatewayError> {
        let transport = Arc::new(UreqTransport::new(Duration::from_secs(spec.timeout_secs)));
        self.register_backend_with(spec, &process_env, transport)
    }

    pub fn register_backend_with(
        &self,
        spec: BackendSpec,
        env: &dyn Fn(&str) -> Option<String>,
        transport: Arc<dyn HttpTransport>,
    ) -> Result<String, GatewayError> {
        spec.validate()?;
        if self.backends.read().unwrap().contains_key(&spec.id) {
            return Err(GatewayError::DuplicateBackend(spec.id.clone()));
        }
        let backend: Arc<dyn Backend> = match spec.kind {
            BackendKind::Scripted => {
                let path = spec.script.as_ref().expect("validated");
                Arc::new(ScriptedBackend::from_file(path)?)
            }
            kind => {
                let var = spec.credential_env_var.clone().expect("validated");
                let key = env(&var).ok_or_else(|| GatewayError::MissingCredential {
                    id: spec.id.clone(),
                    var: var.clone(),
                })?;
                if kind == BackendKind::OpenaiCompatibleHttp {
                    Arc::new(OpenAiBackend::new(&spec, key, transport))
                } else {
                    Arc::new(GeminiBackend::new(&spec, key, transport))
                }
            }
        };
        self.insert(spec, backend)
    }

    /// Register an already-built backend under `spec.id`.
    pub fn register_custom(&self, spec: BackendSpec, backend: Arc<dyn Backend>) -> Result<String, GatewayError> {
        if spec.id.trim().is_empty() {
            return Err(GatewayError::InvalidSpec {
                id: spec.id.clone(),
                reason: "backend id must not be empty".into(),
            });
        }
        self.insert(spec, backend)
    }

    fn insert(&self, spec: BackendSpec, backend: Arc<dyn Backend>) -> Result<String, GatewayError> {
        let mut map = self.backends.write().unwrap();
        if map.contains_key(&spec.id) {
            return Err(GatewayError::DuplicateBackend(spec.id.clone()));
        }
        let id = spec.id.clone();
        let limiter = spec.rate_limit.map(TokenBucket::per_minute);
        map.insert(id.clone(), Arc::new(Registered { spec, backend, limiter }));
        Ok(id)
    }

    pub fn backend_ids(&self) -> Vec<String> {
        self.backends.read().unwrap().keys().cloned().collect()
    }

    pub fn spec(&self, id: &str) -> Option<BackendSpec> {
        self.backends.read().unwrap().get(id).map(|r| r.spec.clone())
    }

    pub fn attempt_log(&self) -> Vec<AttemptRecord> {
        self.log.lock().unwrap().clone()
    }

    fn log_attempt(&self, request: &AgentRequest, attempt: u32, status: Option<u16>, outcome: AttemptOutcome, delay: Duration) {
        self.log.lock().unwrap().push(AttemptRecord {
            backend_id: request.backend_id.clone(),
            role: request.role,
            item_id: request.context.item_id.clone(),
            attempt,
            status,
            outcome,
            delay_before_ms: delay.as_millis() as u64,
        });
    }

    /// Send `request`, retrying transient failures with exponential backoff.
    pub fn complete(&self, request: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        request.validate()?;
        let registered = self
            .backends
            .read()
            .unwrap()
            .get(&request.backend_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownBackend(request.backend_id.clone()))?;
        let retry = &registered.spec.retry;
        let mut delay = Duration::ZERO;
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if let Some(limiter) = &registered.limiter {
                limiter.acquire(self.pacer.as_ref());
            }
            let started = Instant::now();
            let result = registered.backend.call(request);
            let latency_ms = started.elapsed().as_millis() as u64;
            match result {
                Ok(reply) => {
                    self.log_attempt(request, attempt, None, AttemptOutcome::Success, delay);
                    if reply.text.is_empty() && !reply.truncated {
                        return Err(GatewayError::Malformed("empty reply without truncation".into()));
                    }
                    if reply.truncated {
                        tracing::warn!(backend = %request.backend_id, "reply truncated at max_tokens");
                    }
                    return Ok(AgentResponse {
                        text: reply.text,
                        latency_ms,
                        truncated: reply.truncated,
                        attempt_count: attempt,
                        backend_meta: reply.meta,
                    });
                }
                Err(AttemptError::Fatal(err)) => {
                    self.log_attempt(request, attempt, None, AttemptOutcome::Fatal, delay);
                    return Err(err);
                }
                Err(AttemptError::Retryable {
                    status,
                    retry_after,
                    message,
                }) => {
                    self.log_attempt(request, attempt, status, AttemptOutcome::Retryable, delay);
                    if attempt > retry.max_retries {
                        return Err(if status == Some(429) {
                            GatewayError::RateLimited { attempts: attempt }
                        } else {
                            GatewayError::RetriesExhausted {
                                attempts: attempt,
                                message,
                            }
                        });
                    }
                    let mut next = retry.backoff(attempt - 1).max(delay);
                    if let Some(hint) = retry_after {
                        next = next.max(hint.min(Duration::from_millis(retry.backoff_cap_ms)));
                    }
                    delay = next;
                    tracing::debug!(backend = %request.backend_id, attempt, ?delay, "retrying");
                    self.pacer.sleep(delay);
                }
            }
        }
    }
}

/// One agent's ongoing chat: its persona, the image, and every exchange so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub role: Role,
    pub backend_id: String,
    pub system_prompt: String,
    pub decoding: Decoding,
    pub item_id: String,
    pub image_ref: Option<String>,
    pub history: Vec<ChatMessage>,
}

impl Conversation {
    pub fn new(role: Role, backend_id: &str, system_prompt: &str, decoding: Decoding, item_id: &str, image_ref: Option<&str>) -> Self {
        Self {
            role,
            backend_id: backend_id.to_string(),
            system_prompt: system_prompt.to_string(),
            decoding,
            item_id: item_id.to_string(),
            image_ref: image_ref.map(str::to_string),
            history: Vec::new(),
        }
    }

    /// The request `ask` would send, without sending it.
    pub fn request(&self, prompt: &str, round: u32, kind: MessageKind) -> AgentRequest {
        let mut messages = self.history.clone();
        let mut user = ChatMessage::user(prompt);
        if messages.is_empty() {
            user.image_ref = self.image_ref.clone();
        }
        messages.push(user);
        AgentRequest {
            role: self.role,
            system_prompt: self.system_prompt.clone(),
            messages,
            decoding: self.decoding,
            backend_id: self.backend_id.clone(),
            context: RequestContext {
                item_id: self.item_id.clone(),
                round,
                message_kind: Some(kind),
            },
        }
    }

    /// Send `prompt` with the whole history; on success the exchange joins the history.
    pub fn ask(&mut self, gateway: &Gateway, prompt: &str, round: u32, kind: MessageKind) -> Result<AgentResponse, GatewayError> {
        let request = self.request(prompt, round, kind);
        let response = gateway.complete(&request)?;
        let mut messages = request.messages;
        messages.push(ChatMessage::assistant(response.text.clone()));
        self.history = messages;
        Ok(response)
    }
}
