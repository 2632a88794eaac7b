//! Remote chat-endpoint backend.
//!
//! Sends the rendered prompt as a single user message to
//! `{base_url}/chat/completions` and parses the reply's ACTION line. Server
//! errors and timeouts retry with bounded exponential backoff; parse errors
//! retry with a corrective note appended to the prompt; 4xx responses fail
//! fast. After `max_retries` extra attempts the call reports a recoverable
//! failure and the engine discards the rollout.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::parse::parse_agent_output;
use super::{ActRequest, AgentBackend, AgentDecision, AgentError};

fn default_temperature() -> f64 {
    1.0
}

fn default_max_output_tokens() -> u32 {
    1024
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

fn default_max_in_flight() -> usize {
    8
}

/// Connection settings for a chat-completions style endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Name of the environment variable holding the bearer token; empty for
    /// unauthenticated endpoints.
    #[serde(default)]
    pub api_key_env: String,
}

const BACKOFF_BASE_MS: u64 = 200;
const BACKOFF_CAP_MS: u64 = 5_000;

fn backoff_delay(attempt: u32) -> Duration {
    let exp = BACKOFF_BASE_MS.saturating_mul(1u64 << attempt.min(16));
    Duration::from_millis(exp.min(BACKOFF_CAP_MS))
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.available.notify_one();
    }
}

/// Blocking client for a remote model endpoint.
pub struct RemoteAgent {
    config: RemoteEndpointConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteAgent {
    pub fn new(config: RemoteEndpointConfig) -> Result<Self, AgentError> {
        if config.max_in_flight == 0 {
            return Err(AgentError::Config("max_in_flight must be at least 1".into()));
        }
        if config.base_url.is_empty() {
            return Err(AgentError::Config("base_url is empty".into()));
        }
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(&config.api_key_env).map_err(|_| {
                AgentError::Config(format!(
                    "environment variable {} named by api_key_env is not set",
                    config.api_key_env
                ))
            })?)
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        let gate = Gate::new(config.max_in_flight);
        Ok(Self {
            config,
            api_key,
            agent,
            gate,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn post(&self, content: &str) -> Result<String, TransportOutcome> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        let mut request = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match request.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) if code >= 500 => {
                return Err(TransportOutcome::Retryable(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => {
                return Err(TransportOutcome::Fatal(format!("HTTP {code}")))
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(TransportOutcome::Retryable(format!("transport: {t}")))
            }
        };
        let value: serde_json::Value = response
            .into_json()
            .map_err(|e| TransportOutcome::Retryable(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                TransportOutcome::Retryable("response lacks choices[0].message.content".into())
            })
    }
}

enum TransportOutcome {
    Retryable(String),
    Fatal(String),
}

fn corrective_note(content: &str, error: &str) -> String {
    format!(
        "{content}\n\nSYSTEM NOTE : your previous reply could not be used ({error}). \
         Reply again with exactly one line of the form ACTION : **<ACTION>** : <text>."
    )
}

impl AgentBackend for RemoteAgent {
    fn descriptor(&self) -> String {
        format!("remote({} @ {})", self.config.model_name, self.config.base_url)
    }

    fn act(&self, request: &ActRequest<'_>) -> Result<AgentDecision, AgentError> {
        let _permit = self.gate.acquire();
        let mut content = request.prompt.rendered.clone();
        let mut attempts = 0u32;
        let mut last_error = String::new();
        while attempts <= self.config.max_retries {
            attempts += 1;
            match self.post(&content) {
                Ok(reply) => {
                    match parse_agent_output(&reply, request.role, request.allowed) {
                        Ok(parsed) => {
                            return Ok(AgentDecision {
                                thought: parsed.thought,
                                action: parsed.action,
                                observation: parsed.observation,
                                attempts,
                            });
                        }
                        Err(parse_err) => {
                            last_error = parse_err.to_string();
                            content = corrective_note(&request.prompt.rendered, &last_error);
                        }
                    }
                }
                Err(TransportOutcome::Retryable(reason)) => {
                    last_error = reason;
                    if attempts <= self.config.max_retries {
                        std::thread::sleep(backoff_delay(attempts - 1));
                    }
                }
                Err(TransportOutcome::Fatal(reason)) => {
                    return Err(AgentError::Recoverable { reason, attempts });
                }
            }
        }
        Err(AgentError::Recoverable {
            reason: last_error,
            attempts,
        })
    }
}
