//! HTTP transport to an OpenAI-compatible endpoint.
//!
//! All outbound traffic funnels through [`Transport::post_json`], which checks
//! the global [`guard`] first. Replay runs install the guard so that any code
//! path attempting network I/O fails loudly instead of phoning home.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("network access is forbidden (replay mode); attempted POST {0}")]
    Forbidden(String),
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Failed { attempts: u32, message: String },
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

/// Global accounting of outbound attempts, plus a re-entrant "forbid" latch.
pub mod guard {
    use super::*;
    use std::sync::atomic::AtomicI64;

    static FORBID_DEPTH: AtomicI64 = AtomicI64::new(0);
    static ATTEMPTS: AtomicU64 = AtomicU64::new(0);

    /// Total outbound network attempts since process start.
    pub fn attempts() -> u64 {
        ATTEMPTS.load(Ordering::SeqCst)
    }

    pub(super) fn record_attempt() {
        ATTEMPTS.fetch_add(1, Ordering::SeqCst);
    }

    pub fn is_forbidden() -> bool {
        FORBID_DEPTH.load(Ordering::SeqCst) > 0
    }

    /// Forbids network I/O until the returned token is dropped.
    pub fn forbid_network() -> ForbidToken {
        FORBID_DEPTH.fetch_add(1, Ordering::SeqCst);
        ForbidToken { _priv: () }
    }

    pub struct ForbidToken {
        _priv: (),
    }

    impl Drop for ForbidToken {
        fn drop(&mut self) {
            FORBID_DEPTH.fetch_sub(1, Ordering::SeqCst);
        }
    }
}

/// Blocking HTTP client with bounded retries and exponential backoff.
pub struct Transport {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
    max_attempts: u32,
    backoff: Duration,
}

impl Transport {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Transport {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        Transport {
            base_url: base_url.into(),
            api_key: api_key.into(),
            agent: config.new_agent(),
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }

    /// Reads `LLM_BASE_URL` and `LLM_API_KEY` from the environment.
    pub fn from_env() -> Result<Transport, TransportError> {
        let base_url =
            std::env::var("LLM_BASE_URL").map_err(|_| TransportError::MissingEnv("LLM_BASE_URL"))?;
        let api_key =
            std::env::var("LLM_API_KEY").map_err(|_| TransportError::MissingEnv("LLM_API_KEY"))?;
        Ok(Transport::new(base_url, api_key))
    }

    pub fn with_retry(mut self, max_attempts: u32, backoff: Duration) -> Transport {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn url(&self, path: &str) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            path.trim_start_matches('/')
        )
    }

    /// POSTs a JSON body, retrying transient failures (I/O errors, timeouts,
    /// 429 and 5xx responses) with exponential backoff.
    pub fn post_json(
        &self,
        path: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, TransportError> {
        let url = self.url(path);
        let mut last_failure: Option<TransportError> = None;

        for attempt in 1..=self.max_attempts {
            if guard::is_forbidden() {
                return Err(TransportError::Forbidden(url));
            }
            guard::record_attempt();

            match self.send_once(&url, body) {
                Ok(value) => return Ok(value),
                Err(SendError::Retryable(message)) => {
                    log::warn!("attempt {attempt}/{} failed: {message}", self.max_attempts);
                    last_failure = Some(if message.contains("timed out") {
                        TransportError::Timeout { attempts: attempt }
                    } else {
                        TransportError::Failed {
                            attempts: attempt,
                            message,
                        }
                    });
                    if attempt < self.max_attempts {
                        std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                    }
                }
                Err(SendError::Fatal(err)) => return Err(err),
            }
        }
        Err(last_failure.unwrap_or(TransportError::Failed {
            attempts: self.max_attempts,
            message: "no attempts made".into(),
        }))
    }

    fn send_once(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, SendError> {
        let result = self
            .agent
            .post(url)
            .header("authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);

        let mut response = match result {
            Ok(r) => r,
            Err(e) => return Err(SendError::Retryable(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| SendError::Retryable(e.to_string()))?;

        if status == 429 || status >= 500 {
            return Err(SendError::Retryable(format!("status {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            return Err(SendError::Fatal(TransportError::Provider {
                status,
                body: text,
            }));
        }
        serde_json::from_str(&text)
            .map_err(|e| SendError::Fatal(TransportError::BadResponse(e.to_string())))
    }
}

enum SendError {
    Retryable(String),
    Fatal(TransportError),
}
