use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{attribute_recall, normalize_whitespace, render_prompt, CaptionError, CaptionRequest, CaptionResult, CaptionSource};

const SYSTEM_PROMPT: &str =
    "You write professional, accurate descriptions of music from a list of attributes.";

/// Remote text-generation endpoint. The auth token is read from the
/// environment variable named by `token_env` at call time and is never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub token_env: String,
    pub timeout_secs: f64,
    pub max_retries: usize,
    pub temperature: f64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model: "caption-model".to_string(),
            token_env: "CAPTION_API_TOKEN".to_string(),
            timeout_secs: 30.0,
            max_retries: 2,
            temperature: 0.7,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), CaptionError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(CaptionError::Config("timeout_secs must be > 0".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(CaptionError::Config("temperature must lie in [0, 2]".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(CaptionError::Config("base_url is empty".into()));
        }
        if self.token_env.trim().is_empty() {
            return Err(CaptionError::Config("token_env is empty".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Request/response shape of a completion API.
pub trait WireFormat {
    fn request_body(&self, config: &EndpointConfig, prompt: &str) -> Value;
    fn extract_text(&self, response: &Value) -> Option<String>;
}

/// The common chat-completions JSON shape.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChatCompletions;

impl WireFormat for ChatCompletions {
    fn request_body(&self, config: &EndpointConfig, prompt: &str) -> Value {
        json!({
            "model": config.model,
            "temperature": config.temperature,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
        })
    }

    fn extract_text(&self, response: &Value) -> Option<String> {
        response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
    }
}

enum Attempt {
    Retry(String),
    Fatal(CaptionError),
}

fn call_once(agent: &ureq::Agent, url: &str, token: &str, body: &Value) -> Result<Value, Attempt> {
    let response = agent
        .post(url)
        .set("Authorization", &format!("Bearer {token}"))
        .send_json(body.clone());
    match response {
        Ok(r) => r
            .into_json::<Value>()
            .map_err(|e| Attempt::Fatal(CaptionError::Malformed(format!("body is not JSON: {e}")))),
        Err(ureq::Error::Status(code @ (401 | 403), _)) => Err(Attempt::Fatal(CaptionError::Config(format!(
            "endpoint rejected credentials (HTTP {code})"
        )))),
        Err(ureq::Error::Status(code, _)) if code == 408 || code == 429 || code >= 500 => {
            Err(Attempt::Retry(format!("HTTP {code}")))
        }
        Err(ureq::Error::Status(code, _)) => Err(Attempt::Fatal(CaptionError::Endpoint {
            attempts: 1,
            message: format!("HTTP {code}"),
        })),
        Err(ureq::Error::Transport(t)) => Err(Attempt::Retry(t.kind().to_string())),
    }
}

/// Captions one request through the endpoint.
///
/// Missing tokens fail before any connection is made. Transport errors,
/// timeouts and 408/429/5xx responses are retried up to `max_retries` times;
/// 401/403 fail at once.
pub fn generate_caption(request: &CaptionRequest, config: &EndpointConfig) -> Result<CaptionResult, CaptionError> {
    generate_caption_with(request, config, &ChatCompletions)
}

pub(crate) fn generate_caption_with(
    request: &CaptionRequest,
    config: &EndpointConfig,
    wire: &dyn WireFormat,
) -> Result<CaptionResult, CaptionError> {
    request.validate()?;
    config.validate()?;
    let token = std::env::var(&config.token_env)
        .map_err(|_| CaptionError::Config(format!("environment variable {} is not set", config.token_env)))?;
    let timeout = Duration::from_secs_f64(config.timeout_secs);
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let url = config.completions_url();
    let body = wire.request_body(config, &render_prompt(request));
    let started = Instant::now();
    let attempts = config.max_retries + 1;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match call_once(&agent, &url, &token, &body) {
            Ok(value) => {
                let text = wire
                    .extract_text(&value)
                    .ok_or_else(|| CaptionError::Malformed("no completion text in response".into()))?;
                let caption = normalize_whitespace(&text);
                if caption.is_empty() {
                    return Err(CaptionError::Malformed("empty completion".into()));
                }
                let recall = attribute_recall(&caption, &request.attributes);
                return Ok(CaptionResult {
                    caption,
                    source: CaptionSource::Endpoint,
                    attribute_recall: recall,
                });
            }
            Err(Attempt::Fatal(CaptionError::Endpoint { message, .. })) => {
                return Err(CaptionError::Endpoint { attempts: attempt, message })
            }
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Retry(msg)) => {
                log::warn!("caption endpoint attempt {attempt}/{attempts} failed: {msg}");
                last = msg;
                if attempt < attempts {
                    std::thread::sleep(Duration::from_millis(50 << (attempt - 1).min(4)));
                }
            }
        }
    }
    log::debug!("endpoint gave up after {:?}", started.elapsed());
    Err(CaptionError::Endpoint { attempts, message: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::mock::{MockBehavior, MockEndpoint};

    fn config(server: &MockEndpoint, env: &str) -> EndpointConfig {
        EndpointConfig {
            base_url: server.base_url(),
            token_env: env.to_string(),
            timeout_secs: 2.0,
            max_retries: 2,
            ..EndpointConfig::default()
        }
    }

    fn request() -> CaptionRequest {
        CaptionRequest::new(["folk", "acoustic guitar", "upbeat"])
    }

    #[test]
    fn echo_endpoint_gives_full_recall() {
        let server = MockEndpoint::start(MockBehavior::Echo).unwrap();
        std::env::set_var("CS_TEST_TOKEN_ECHO", "secret-value");
        let out = generate_caption(&request(), &config(&server, "CS_TEST_TOKEN_ECHO")).unwrap();
        assert_eq!(out.source, CaptionSource::Endpoint);
        assert_eq!(out.attribute_recall, 1.0);
        assert!(!out.caption.contains("secret-value"));
        assert_eq!(server.authorized_requests(), 1);
    }

    #[test]
    fn missing_token_fails_before_connecting() {
        let server = MockEndpoint::start(MockBehavior::Echo).unwrap();
        let err = generate_caption(&request(), &config(&server, "CS_TEST_TOKEN_UNSET_X")).unwrap_err();
        assert!(matches!(err, CaptionError::Config(_)), "{err}");
        assert_eq!(server.hits(), 0);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let server = MockEndpoint::start(MockBehavior::Status(401)).unwrap();
        std::env::set_var("CS_TEST_TOKEN_AUTH", "t");
        let err = generate_caption(&request(), &config(&server, "CS_TEST_TOKEN_AUTH")).unwrap_err();
        assert!(matches!(err, CaptionError::Config(_)), "{err}");
        assert_eq!(server.hits(), 1);
    }

    #[test]
    fn server_errors_are_retried_then_reported() {
        let server = MockEndpoint::start(MockBehavior::Status(503)).unwrap();
        std::env::set_var("CS_TEST_TOKEN_503", "t");
        let err = generate_caption(&request(), &config(&server, "CS_TEST_TOKEN_503")).unwrap_err();
        assert!(matches!(err, CaptionError::Endpoint { attempts: 3, .. }), "{err}");
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn empty_completion_is_malformed() {
        let server = MockEndpoint::start(MockBehavior::Fixed("   ".into())).unwrap();
        std::env::set_var("CS_TEST_TOKEN_EMPTY", "t");
        let err = generate_caption(&request(), &config(&server, "CS_TEST_TOKEN_EMPTY")).unwrap_err();
        assert!(matches!(err, CaptionError::Malformed(_)), "{err}");
    }

    #[test]
    fn timeouts_are_bounded() {
        let server = MockEndpoint::start(MockBehavior::Stall(Duration::from_millis(1500))).unwrap();
        std::env::set_var("CS_TEST_TOKEN_SLOW", "t");
        let cfg = EndpointConfig {
            timeout_secs: 0.2,
            max_retries: 1,
            ..config(&server, "CS_TEST_TOKEN_SLOW")
        };
        let start = Instant::now();
        let err = generate_caption(&request(), &cfg).unwrap_err();
        assert!(matches!(err, CaptionError::Endpoint { attempts: 2, .. }), "{err}");
        assert!(start.elapsed() < Duration::from_secs_f64(2.0 * 0.2 + 1.0));
    }

    #[test]
    fn unreachable_host_fails_after_retries() {
        // bind then drop to get a closed local port
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        std::env::set_var("CS_TEST_TOKEN_CLOSED", "t");
        let cfg = EndpointConfig {
            base_url: format!("http://127.0.0.1:{port}/v1"),
            token_env: "CS_TEST_TOKEN_CLOSED".into(),
            timeout_secs: 1.0,
            max_retries: 2,
            ..EndpointConfig::default()
        };
        let err = generate_caption(&request(), &cfg).unwrap_err();
        assert!(matches!(err, CaptionError::Endpoint { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn chat_body_shape() {
        let body = ChatCompletions.request_body(&EndpointConfig::default(), "hello");
        assert_eq!(body["messages"][1]["content"], "hello");
        assert_eq!(ChatCompletions.extract_text(&json!({"choices": []})), None);
    }
}
