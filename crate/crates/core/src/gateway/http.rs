//! Live HTTP backend speaking a chat-completions-style wire protocol.
//!
//! Request: `POST <endpoint>` with JSON body
//! `{"model", "messages", "max_tokens", "temperature", "stop"?, ...extra}`
//! and optional `Authorization: Bearer <token>` where the token comes from
//! the environment variable named in the config (resolved per request,
//! never at load).
//!
//! Response: `{"choices":[{"message":{"content": ...}}], "usage":
//! {"prompt_tokens", "completion_tokens"}}`. When the server reports its
//! own processing time in an `x-processing-ms` header, that value is
//! recorded as the completion latency instead of the measured wall time;
//! this is what makes stub-backed runs reproducible to the byte.

use std::thread::sleep;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{BackendConfig, Completion, CompletionRequest, RetryClass, Usage};

pub(super) struct HttpBackend {
    client: reqwest::blocking::Client,
}

enum AttemptError {
    Retryable(RetryClass, String),
    Fatal(String),
}

impl HttpBackend {
    pub(super) fn new(config: &BackendConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::config(format!("backend '{}': {e}", config.id)))?;
        Ok(HttpBackend { client })
    }

    pub(super) fn complete(
        &self,
        request: &CompletionRequest,
        config: &BackendConfig,
    ) -> Result<Completion> {
        let body = wire_body(request, config);
        let token = match &config.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::config(format!(
                    "backend '{}': auth env var '{var}' is not set",
                    config.id
                ))
            })?),
            None => None,
        };
        let endpoint = config.endpoint.as_ref().expect("validated");

        let mut last_error = String::new();
        for attempt in 0..config.retry.max_attempts {
            match self.attempt(endpoint, &body, token.as_deref()) {
                Ok((text, usage, latency_ms)) => {
                    return Ok(Completion {
                        text,
                        usage,
                        latency_ms,
                        retries_used: attempt,
                        backend_id: config.id.clone(),
                    });
                }
                Err(AttemptError::Fatal(message)) => {
                    return Err(Error::TransportExhausted {
                        backend_id: config.id.clone(),
                        attempts: attempt + 1,
                        last_error: message,
                    });
                }
                Err(AttemptError::Retryable(class, message)) => {
                    last_error = message;
                    if !config.retry.is_retryable(class) || attempt + 1 == config.retry.max_attempts
                    {
                        return Err(Error::TransportExhausted {
                            backend_id: config.id.clone(),
                            attempts: attempt + 1,
                            last_error,
                        });
                    }
                    // Deterministic: base * 2^attempt, no jitter.
                    let backoff = config
                        .retry
                        .base_backoff_ms
                        .saturating_mul(1 << attempt.min(16));
                    sleep(Duration::from_millis(backoff));
                }
            }
        }
        Err(Error::TransportExhausted {
            backend_id: config.id.clone(),
            attempts: config.retry.max_attempts,
            last_error,
        })
    }

    fn attempt(
        &self,
        endpoint: &str,
        body: &Value,
        token: Option<&str>,
    ) -> std::result::Result<(String, Usage, u64), AttemptError> {
        let start = Instant::now();
        let mut builder = self.client.post(endpoint).json(body);
        if let Some(token) = token {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Retryable(RetryClass::Timeout, format!("timeout: {e}"))
            } else {
                AttemptError::Retryable(RetryClass::ServerError, format!("connection: {e}"))
            }
        })?;

        let status = response.status();
        let server_ms = response
            .headers()
            .get("x-processing-ms")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u64>().ok());
        if status.as_u16() == 429 {
            return Err(AttemptError::Retryable(
                RetryClass::RateLimit,
                format!("status {status}"),
            ));
        }
        if status.is_server_error() {
            return Err(AttemptError::Retryable(
                RetryClass::ServerError,
                format!("status {status}"),
            ));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(format!("status {status}")));
        }

        let payload: Value = response.json().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Retryable(RetryClass::Timeout, format!("timeout: {e}"))
            } else {
                AttemptError::Fatal(format!("unparseable response body: {e}"))
            }
        })?;
        let text = payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                AttemptError::Fatal("response has no choices[0].message.content".to_string())
            })?
            .to_string();
        let usage = Usage {
            prompt_tokens: payload
                .pointer("/usage/prompt_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
            completion_tokens: payload
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        };
        let latency_ms = server_ms.unwrap_or_else(|| start.elapsed().as_millis() as u64);
        Ok((text, usage, latency_ms))
    }
}

fn wire_body(request: &CompletionRequest, config: &BackendConfig) -> Value {
    let mut map = serde_json::Map::new();
    // Extras first; core fields win on collision.
    for (key, value) in &request.params.extra {
        map.insert(key.clone(), value.clone());
    }
    map.insert(
        "model".to_string(),
        json!(config.model_name.as_deref().expect("validated")),
    );
    map.insert("messages".to_string(), json!(request.messages));
    map.insert("max_tokens".to_string(), json!(request.params.max_tokens));
    map.insert("temperature".to_string(), json!(request.params.temperature));
    if !request.params.stop_sequences.is_empty() {
        map.insert("stop".to_string(), json!(request.params.stop_sequences));
    }
    Value::Object(map)
}
