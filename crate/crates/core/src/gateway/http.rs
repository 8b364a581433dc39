//! Chat-completion wire formats for OpenAI-compatible and Gemini-style APIs.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde_json::{json, Value};
use thiserror::Error;

use super::{AgentRequest, AttemptError, Backend, BackendReply, BackendSpec, ChatRole, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// Header names are lower-case.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

/// Connection-level failure: nothing usable came back.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

pub trait HttpTransport: Send + Sync {
    fn post(&self, url: &str, headers: &[(String, String)], body: Vec<u8>) -> Result<HttpResponse, TransportError>;
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self { agent: config.into() }
    }

    fn convert(mut resp: ureq::http::Response<ureq::Body>) -> Result<HttpResponse, TransportError> {
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.as_str().to_ascii_lowercase(), v.to_str().unwrap_or("").to_string()))
            .collect();
        let body = resp
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, headers, body })
    }
}

impl HttpTransport for UreqTransport {
    fn post(&self, url: &str, headers: &[(String, String)], body: Vec<u8>) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.post(url).header("content-type", "application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send(&body[..]).map_err(|e| TransportError(e.to_string()))?;
        Self::convert(resp)
    }

    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let resp = self.agent.get(url).call().map_err(|e| TransportError(e.to_string()))?;
        Self::convert(resp)
    }
}

enum Image {
    Url(String),
    Inline { mime: String, data: String },
    Uri { mime: String, uri: String },
}

fn mime_for(name: &str) -> &'static str {
    let lower = name.to_ascii_lowercase();
    let ext = lower.rsplit('.').next().unwrap_or("");
    match ext {
        "png" => "image/png",
        "gif" => "image/gif",
        "webp" => "image/webp",
        "bmp" => "image/bmp",
        _ => "image/jpeg",
    }
}

fn is_http_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

/// Resolve an image reference for the wire: remote URLs are passed through when
/// the API accepts them (otherwise downloaded), everything else is read and inlined.
fn load_image(image_ref: &str, pass_urls: bool, transport: &dyn HttpTransport) -> Result<Image, AttemptError> {
    let fail = |reason: String| {
        AttemptError::Fatal(GatewayError::Image {
            image: image_ref.to_string(),
            reason,
        })
    };
    if is_http_url(image_ref) {
        if pass_urls {
            return Ok(Image::Url(image_ref.to_string()));
        }
        let resp = transport.get(image_ref).map_err(|e| AttemptError::Retryable {
            status: None,
            retry_after: None,
            message: e.to_string(),
        })?;
        if resp.status != 200 {
            return Err(fail(format!("download returned HTTP {}", resp.status)));
        }
        let mime = resp
            .header("content-type")
            .filter(|m| m.starts_with("image/"))
            .map(str::to_string)
            .unwrap_or_else(|| mime_for(image_ref).to_string());
        return Ok(Image::Inline {
            mime,
            data: BASE64.encode(&resp.body),
        });
    }
    if image_ref.starts_with("gs://") {
        return Ok(Image::Uri {
            mime: mime_for(image_ref).to_string(),
            uri: image_ref.to_string(),
        });
    }
    let bytes = fs::read(Path::new(image_ref)).map_err(|e| fail(e.to_string()))?;
    Ok(Image::Inline {
        mime: mime_for(image_ref).to_string(),
        data: BASE64.encode(bytes),
    })
}

fn retry_after(resp: &HttpResponse) -> Option<Duration> {
    let v = resp.header("retry-after")?.trim().parse::<f64>().ok()?;
    (v.is_finite() && v >= 0.0).then(|| Duration::from_secs_f64(v))
}

fn redact(text: &str, secret: &str) -> String {
    let mut out = if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[redacted]")
    };
    if out.len() > 300 {
        let mut cut = 300;
        while !out.is_char_boundary(cut) {
            cut -= 1;
        }
        out.truncate(cut);
    }
    out
}

/// Map a non-200 status to retryable or fatal.
fn classify(resp: &HttpResponse, secret: &str) -> AttemptError {
    let message = redact(&resp.text(), secret);
    match resp.status {
        401 | 403 => AttemptError::Fatal(GatewayError::Auth {
            status: resp.status,
            message,
        }),
        408 | 429 | 500..=599 => AttemptError::Retryable {
            status: Some(resp.status),
            retry_after: retry_after(resp),
            message: format!("HTTP {}: {message}", resp.status),
        },
        status => AttemptError::Fatal(GatewayError::Http { status, message }),
    }
}

fn send(transport: &dyn HttpTransport, url: &str, headers: &[(String, String)], body: &Value, secret: &str) -> Result<Value, AttemptError> {
    let bytes = serde_json::to_vec(body).expect("request bodies serialize");
    let resp = transport
        .post(url, headers, bytes)
        .map_err(|e| AttemptError::Retryable {
            status: None,
            retry_after: None,
            message: redact(&e.0, secret),
        })?;
    if resp.status != 200 {
        return Err(classify(&resp, secret));
    }
    serde_json::from_slice(&resp.body)
        .map_err(|e| AttemptError::Fatal(GatewayError::Malformed(format!("reply is not JSON: {e}"))))
}

fn malformed(msg: &str) -> AttemptError {
    AttemptError::Fatal(GatewayError::Malformed(msg.to_string()))
}

pub struct OpenAiBackend {
    endpoint: String,
    model: String,
    api_key: String,
    transport: Arc<dyn HttpTransport>,
}

impl fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl OpenAiBackend {
    pub fn new(spec: &BackendSpec, api_key: String, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            endpoint: spec.endpoint.clone().unwrap_or_default(),
            model: spec.model.clone().unwrap_or_default(),
            api_key,
            transport,
        }
    }

    pub fn body(&self, request: &AgentRequest) -> Result<Value, AttemptError> {
        let mut messages = Vec::new();
        if !request.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_prompt}));
        }
        for m in &request.messages {
            match m.role {
                ChatRole::Assistant => messages.push(json!({"role": "assistant", "content": m.text})),
                ChatRole::User => {
                    let mut parts = vec![json!({"type": "text", "text": m.text})];
                    if let Some(image) = &m.image_ref {
                        let url = match load_image(image, true, self.transport.as_ref())? {
                            Image::Url(u) => u,
                            Image::Inline { mime, data } => format!("data:{mime};base64,{data}"),
                            Image::Uri { .. } => {
                                return Err(AttemptError::Fatal(GatewayError::Image {
                                    image: image.clone(),
                                    reason: "gs:// URIs are not supported by this backend".into(),
                                }))
                            }
                        };
                        parts.push(json!({"type": "image_url", "image_url": {"url": url}}));
                    }
                    messages.push(json!({"role": "user", "content": parts}));
                }
            }
        }
        Ok(json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_tokens,
        }))
    }

    pub fn parse(reply: &Value) -> Result<BackendReply, AttemptError> {
        let choice = reply
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| malformed("no choices in reply"))?;
        let content = choice.get("message").and_then(|m| m.get("content"));
        let text = match content {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(parts)) => parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
            Some(Value::Null) | None => String::new(),
            Some(_) => return Err(malformed("message content has an unexpected type")),
        };
        let finish = choice.get("finish_reason").and_then(Value::as_str).unwrap_or("");
        let mut meta = std::collections::BTreeMap::new();
        if let Some(m) = reply.get("model") {
            meta.insert("model".to_string(), m.clone());
        }
        if let Some(u) = reply.get("usage") {
            meta.insert("usage".to_string(), u.clone());
        }
        meta.insert("finish_reason".to_string(), Value::String(finish.to_string()));
        Ok(BackendReply {
            text,
            truncated: finish == "length",
            meta,
        })
    }
}

impl Backend for OpenAiBackend {
    fn call(&self, request: &AgentRequest) -> Result<BackendReply, AttemptError> {
        let body = self.body(request)?;
        let headers = vec![("authorization".to_string(), format!("Bearer {}", self.api_key))];
        let reply = send(self.transport.as_ref(), &self.endpoint, &headers, &body, &self.api_key)?;
        Self::parse(&reply)
    }
}

pub struct GeminiBackend {
    endpoint: String,
    model: String,
    api_key: String,
    transport: Arc<dyn HttpTransport>,
}

impl fmt::Debug for GeminiBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeminiBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl GeminiBackend {
    pub fn new(spec: &BackendSpec, api_key: String, transport: Arc<dyn HttpTransport>) -> Self {
        let model = spec.model.clone().unwrap_or_default();
        Self {
            endpoint: spec.endpoint.clone().unwrap_or_default().replace("{model}", &model),
            model,
            api_key,
            transport,
        }
    }

    pub fn body(&self, request: &AgentRequest) -> Result<Value, AttemptError> {
        let mut contents = Vec::new();
        for m in &request.messages {
            let role = match m.role {
                ChatRole::User => "user",
                ChatRole::Assistant => "model",
            };
            let mut parts = vec![json!({"text": m.text})];
            if let Some(image) = &m.image_ref {
                parts.push(match load_image(image, false, self.transport.as_ref())? {
                    Image::Inline { mime, data } => json!({"inline_data": {"mime_type": mime, "data": data}}),
                    Image::Uri { mime, uri } => json!({"file_data": {"mime_type": mime, "file_uri": uri}}),
                    Image::Url(u) => json!({"file_data": {"mime_type": mime_for(&u), "file_uri": u}}),
                });
            }
            contents.push(json!({"role": role, "parts": parts}));
        }
        let mut body = json!({
            "contents": contents,
            "generationConfig": {
                "temperature": request.decoding.temperature,
                "maxOutputTokens": request.decoding.max_tokens,
            },
        });
        if !request.system_prompt.is_empty() {
            body["systemInstruction"] = json!({"parts": [{"text": request.system_prompt}]});
        }
        Ok(body)
    }

    pub fn parse(reply: &Value) -> Result<BackendReply, AttemptError> {
        let candidate = reply
            .get("candidates")
            .and_then(|c| c.get(0))
            .ok_or_else(|| {
                let reason = reply
                    .get("promptFeedback")
                    .and_then(|p| p.get("blockReason"))
                    .and_then(Value::as_str)
                    .unwrap_or("no candidates in reply");
                malformed(reason)
            })?;
        let text = candidate
            .get("content")
            .and_then(|c| c.get("parts"))
            .and_then(Value::as_array)
            .map(|parts| {
                parts
                    .iter()
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect::<Vec<_>>()
                    .join("")
            })
            .unwrap_or_default();
        let finish = candidate.get("finishReason").and_then(Value::as_str).unwrap_or("");
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("finish_reason".to_string(), Value::String(finish.to_string()));
        if let Some(u) = reply.get("usageMetadata") {
            meta.insert("usage".to_string(), u.clone());
        }
        Ok(BackendReply {
            text,
            truncated: finish == "MAX_TOKENS",
            meta,
        })
    }
}

impl Backend for GeminiBackend {
    fn call(&self, request: &AgentRequest) -> Result<BackendReply, AttemptError> {
        let body = self.body(request)?;
        let headers = vec![("x-goog-api-key".to_string(), self.api_key.clone())];
        let reply = send(self.transport.as_ref(), &self.endpoint, &headers, &body, &self.api_key)?;
        Self::parse(&reply)
    }
}
