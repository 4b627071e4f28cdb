//! OpenAI-compatible chat-completions client over a pluggable transport,
//! with bounded in-flight requests and exponential-backoff retry for
//! transient failures (timeouts, 429, 5xx).

use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::{
    CallMeta, ChatProvider, ChatRequest, ChatResponse, ChatRole, ProviderError, Semaphore,
};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct TransportReply {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP surface the provider needs; tests supply a scripted fake.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<TransportReply, TransportError>;
}

/// Real transport backed by ureq. Status codes are returned as replies,
/// never as errors, so retry classification lives in one place.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<TransportReply, TransportError> {
        let mut request = self
            .agent
            .post(url)
            .header("content-type", "application/json");
        if let Some(token) = bearer {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Io(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(TransportReply { status, body })
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total attempts including the first (a cap of 3 means up to two
    /// retries).
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub in_flight_limit: usize,
}

/// OpenAI-compatible provider: POST {base_url}/v1/chat/completions.
pub struct HttpProvider<T: Transport = UreqTransport> {
    config: HttpProviderConfig,
    transport: T,
    in_flight: Semaphore,
    provider_id: String,
}

impl HttpProvider<UreqTransport> {
    pub fn new(config: HttpProviderConfig, timeout: Duration) -> Self {
        let transport = UreqTransport::new(timeout);
        Self::with_transport(config, transport)
    }
}

impl<T: Transport> HttpProvider<T> {
    pub fn with_transport(config: HttpProviderConfig, transport: T) -> Self {
        let in_flight = Semaphore::new(config.in_flight_limit);
        let provider_id = format!("openai-compatible:{}", config.base_url);
        Self {
            config,
            transport,
            in_flight,
            provider_id,
        }
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn request_body(&self, req: &ChatRequest) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = req
            .messages
            .iter()
            .map(|m| {
                serde_json::json!({
                    "role": match m.role {
                        ChatRole::System => "system",
                        ChatRole::User => "user",
                        ChatRole::Assistant => "assistant",
                    },
                    "content": m.content,
                })
            })
            .collect();
        let mut body = serde_json::json!({
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
        });
        if let Some(max_tokens) = req.max_tokens {
            body["max_tokens"] = serde_json::json!(max_tokens);
        }
        if req.response_format_hint.as_deref() == Some("json") {
            body["response_format"] = serde_json::json!({"type": "json_object"});
        }
        body
    }
}

#[derive(Deserialize)]
struct CompletionsReply {
    choices: Vec<CompletionsChoice>,
    #[serde(default)]
    usage: Option<CompletionsUsage>,
}

#[derive(Deserialize)]
struct CompletionsChoice {
    message: CompletionsMessage,
}

#[derive(Deserialize)]
struct CompletionsMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct CompletionsUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..=599).contains(&status)
}

impl<T: Transport> ChatProvider for HttpProvider<T> {
    fn complete(&self, req: &ChatRequest, _meta: &CallMeta) -> Result<ChatResponse, ProviderError> {
        let _permit = self.in_flight.acquire();
        let body = self.request_body(req);
        let url = self.endpoint();
        let mut last_error = String::new();

        for attempt in 1..=self.config.retry.max_attempts {
            if attempt > 1 {
                let exp = attempt.saturating_sub(2).min(16);
                let delay = self.config.retry.base_delay * 2u32.pow(exp);
                std::thread::sleep(delay);
            }
            match self
                .transport
                .post_json(&url, self.config.api_key.as_deref(), &body)
            {
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "transient transport failure");
                    last_error = e.to_string();
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(ProviderError::Auth(format!(
                        "HTTP {}: {}",
                        reply.status,
                        truncate(&reply.body, 300)
                    )));
                }
                Ok(reply) if retryable_status(reply.status) => {
                    tracing::warn!(attempt, status = reply.status, "retryable provider status");
                    last_error = format!("HTTP {}: {}", reply.status, truncate(&reply.body, 300));
                }
                Ok(reply) if reply.status != 200 => {
                    return Err(ProviderError::Http {
                        status: reply.status,
                        detail: truncate(&reply.body, 300).to_string(),
                    });
                }
                Ok(reply) => {
                    let parsed: CompletionsReply =
                        serde_json::from_str(&reply.body).map_err(|e| {
                            ProviderError::MalformedResponse(format!(
                                "{e} in body {}",
                                truncate(&reply.body, 300)
                            ))
                        })?;
                    let content = parsed
                        .choices
                        .first()
                        .and_then(|c| c.message.content.clone())
                        .ok_or_else(|| {
                            ProviderError::MalformedResponse(
                                "no choices[0].message.content".to_string(),
                            )
                        })?;
                    let usage = parsed.usage.unwrap_or_default();
                    return Ok(ChatResponse {
                        content,
                        prompt_tokens: usage.prompt_tokens,
                        completion_tokens: usage.completion_tokens,
                        provider_id: self.provider_id.clone(),
                        cached: false,
                    });
                }
            }
        }
        Err(ProviderError::Exhausted {
            attempts: self.config.retry.max_attempts,
            last_error,
        })
    }

    fn id(&self) -> &str {
        &self.provider_id
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{CallMeta, ChatMessage};
    use std::sync::Mutex;

    struct FakeTransport {
        replies: Mutex<Vec<Result<TransportReply, TransportError>>>,
        calls: Mutex<u32>,
    }

    impl FakeTransport {
        fn new(replies: Vec<Result<TransportReply, TransportError>>) -> Self {
            Self {
                replies: Mutex::new(replies),
                calls: Mutex::new(0),
            }
        }
    }

    impl Transport for FakeTransport {
        fn post_json(
            &self,
            _url: &str,
            _bearer: Option<&str>,
            _body: &serde_json::Value,
        ) -> Result<TransportReply, TransportError> {
            *self.calls.lock().unwrap() += 1;
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn ok_body() -> String {
        serde_json::json!({
            "choices": [{"message": {"content": "hello"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 4}
        })
        .to_string()
    }

    fn provider(
        replies: Vec<Result<TransportReply, TransportError>>,
    ) -> HttpProvider<FakeTransport> {
        HttpProvider::with_transport(
            HttpProviderConfig {
                base_url: "http://fake".into(),
                api_key: Some("k".into()),
                retry: RetryPolicy {
                    max_attempts: 3,
                    base_delay: Duration::from_millis(1),
                },
                in_flight_limit: 2,
            },
            FakeTransport::new(replies),
        )
    }

    fn req() -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::user("hi")])
    }

    #[test]
    fn success_after_two_429s() {
        let p = provider(vec![
            Ok(TransportReply {
                status: 429,
                body: "slow down".into(),
            }),
            Ok(TransportReply {
                status: 429,
                body: "slow down".into(),
            }),
            Ok(TransportReply {
                status: 200,
                body: ok_body(),
            }),
        ]);
        let resp = p.complete(&req(), &CallMeta::new("s", "c")).unwrap();
        assert_eq!(resp.content, "hello");
        assert_eq!(resp.prompt_tokens, 12);
        assert_eq!(resp.completion_tokens, 4);
        assert_eq!(*p.transport.calls.lock().unwrap(), 3);
    }

    #[test]
    fn exhausted_after_cap() {
        let p = provider(vec![
            Err(TransportError::Timeout),
            Ok(TransportReply {
                status: 503,
                body: "unavailable".into(),
            }),
            Err(TransportError::Io("reset".into())),
        ]);
        let err = p.complete(&req(), &CallMeta::new("s", "c")).unwrap_err();
        match err {
            ProviderError::Exhausted { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn auth_errors_do_not_retry() {
        let p = provider(vec![Ok(TransportReply {
            status: 401,
            body: "bad key".into(),
        })]);
        let err = p.complete(&req(), &CallMeta::new("s", "c")).unwrap_err();
        assert!(matches!(err, ProviderError::Auth(_)));
        assert_eq!(*p.transport.calls.lock().unwrap(), 1);
    }

    #[test]
    fn malformed_body_is_reported() {
        let p = provider(vec![Ok(TransportReply {
            status: 200,
            body: "{\"nope\": 1}".into(),
        })]);
        let err = p.complete(&req(), &CallMeta::new("s", "c")).unwrap_err();
        assert!(matches!(err, ProviderError::MalformedResponse(_)));
    }

    #[test]
    fn non_retryable_4xx_fails_fast() {
        let p = provider(vec![Ok(TransportReply {
            status: 400,
            body: "bad request".into(),
        })]);
        let err = p.complete(&req(), &CallMeta::new("s", "c")).unwrap_err();
        assert!(matches!(err, ProviderError::Http { status: 400, .. }));
        assert_eq!(*p.transport.calls.lock().unwrap(), 1);
    }

    #[test]
    fn json_hint_sets_response_format() {
        let p = provider(vec![]);
        let body = p.request_body(&req().json_hint());
        assert_eq!(body["response_format"]["type"], "json_object");
        let plain = p.request_body(&req());
        assert!(plain.get("response_format").is_none());
    }
}
