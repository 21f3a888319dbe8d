//! Live chat-completions backend.
//!
//! Speaks the common chat-completions wire format: POST with
//! `{model, temperature, messages: [{role: "user", content: prompt}]}`,
//! bearer token from an environment variable. Transport failures and
//! rate limits are retried with exponential backoff.

use super::{GateError, GateRequest};
use serde::Deserialize;
use serde_json::json;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// Total attempts per request (first try included).
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_tokens: Option<u32>,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: String::new(),
            api_key_env: "LLM_API_KEY".to_string(),
            max_attempts: 3,
            initial_backoff_ms: 1000,
            timeout_secs: 120,
            // generous enough for long explanation paragraphs
            max_tokens: Some(2048),
        }
    }
}

#[derive(Debug)]
pub(crate) struct LiveClient {
    config: LiveConfig,
    token: String,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl LiveClient {
    pub fn new(config: LiveConfig) -> Result<LiveClient, GateError> {
        if config.endpoint.is_empty() {
            return Err(GateError::Config(
                "live backend requires an endpoint URL".to_string(),
            ));
        }
        let token = std::env::var(&config.api_key_env)
            .map_err(|_| GateError::MissingApiKey(config.api_key_env.clone()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GateError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(LiveClient {
            config,
            token,
            http,
        })
    }

    pub fn complete(&self, request: &GateRequest) -> Result<String, GateError> {
        let mut body = json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        if let Some(max_tokens) = self.config.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        let mut rate_limited = false;
        let mut last_message = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                let backoff = self.config.initial_backoff_ms << (attempt - 2);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let sent = self
                .http
                .post(&self.config.endpoint)
                .bearer_auth(&self.token)
                .json(&body)
                .send();
            match sent {
                Err(e) => {
                    rate_limited = false;
                    last_message = e.to_string();
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ChatResponse =
                            resp.json().map_err(|e| GateError::Transport {
                                attempts: attempt,
                                message: format!("malformed completion body: {e}"),
                            })?;
                        return parsed
                            .choices
                            .into_iter()
                            .next()
                            .map(|c| c.message.content)
                            .ok_or(GateError::Transport {
                                attempts: attempt,
                                message: "completion carried no choices".to_string(),
                            });
                    }
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(GateError::Auth(format!("endpoint returned {status}")));
                    }
                    if status.as_u16() == 429 {
                        rate_limited = true;
                        last_message = format!("{status}");
                        continue;
                    }
                    if status.is_server_error() {
                        rate_limited = false;
                        last_message = format!("{status}");
                        continue;
                    }
                    // other client errors will not improve on retry
                    return Err(GateError::Transport {
                        attempts: attempt,
                        message: format!("{status}"),
                    });
                }
            }
        }
        if rate_limited {
            Err(GateError::RateLimited {
                attempts: self.config.max_attempts,
            })
        } else {
            Err(GateError::Transport {
                attempts: self.config.max_attempts,
                message: last_message,
            })
        }
    }
}
