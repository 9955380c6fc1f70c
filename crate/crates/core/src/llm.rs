//! Chat-completion client used by the prompting stages.
//!
//! Three modes share one interface. `Live` talks to an OpenAI-compatible
//! endpoint and records every response into a content-addressed cache.
//! `Replay` answers from that cache and treats a miss as an error, so a
//! replayed run can never silently fall back to the network. `Mock` serves
//! canned fixtures matched by stage tag and substring rules, which keeps
//! tests hermetic without pre-recording real traffic.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("[{tag}] invalid request: {message}")]
    InvalidRequest { tag: String, message: String },
    #[error("[{tag}] credentials env var `{env}` is not set")]
    MissingCredentials { tag: String, env: String },
    #[error("[{tag}] http status {status}")]
    Http { tag: String, status: u16 },
    #[error("[{tag}] transport error: {message}")]
    Transport { tag: String, message: String },
    #[error("[{tag}] replay cache miss for key {key}")]
    CacheMiss { tag: String, key: String },
    #[error("[{tag}] no mock fixture matched")]
    FixtureMiss { tag: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One chat-completion request. Temperature defaults to 0 everywhere so
/// that live recordings stay as reproducible as the provider allows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Stage label (classify/analyze/generate); carried into every error
    /// and used by mock fixtures for routing.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(
        tag: impl Into<String>,
        system: impl Into<String>,
        user: impl Into<String>,
    ) -> ChatRequest {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: 1024,
            tag: tag.into(),
        }
    }

    fn validate(&self) -> Result<(), LlmError> {
        for (field, value) in [("system", &self.system), ("user", &self.user)] {
            if value.trim().is_empty() {
                return Err(LlmError::InvalidRequest {
                    tag: self.tag.clone(),
                    message: format!("{field} prompt is empty"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. The key
    /// itself never appears in configuration files.
    pub api_key_env: String,
    pub requests_per_minute: u32,
    /// Every live response is recorded here for later replay.
    pub cache_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub enum ClientMode {
    Live(LiveConfig),
    /// Pure cache lookup. Holds the model name only because it is part of
    /// the cache key; there is no endpoint to fall back to.
    Replay { cache_dir: PathBuf, model: String },
    Mock { fixture_dir: PathBuf },
}

/// A canned response served in mock mode. Fixtures are JSON files tried in
/// sorted filename order; the first whose tag matches and whose `contains`
/// substrings all appear in the user prompt wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockFixture {
    pub tag: String,
    #[serde(default)]
    pub contains: Vec<String>,
    pub response: String,
}

#[derive(Serialize)]
struct CacheKeyInput<'a> {
    system: &'a str,
    user: &'a str,
    temperature: f64,
    max_tokens: u32,
    model: &'a str,
}

/// Content hash identifying a request. Pure in (system, user, temperature,
/// max_tokens, model): byte-identical requests always map to the same key.
pub fn cache_key(req: &ChatRequest, model: &str) -> String {
    let input = CacheKeyInput {
        system: &req.system,
        user: &req.user,
        temperature: req.temperature,
        max_tokens: req.max_tokens,
        model,
    };
    let canonical = serde_json::to_string(&input).expect("key input serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// OpenAI-compatible chat-completions request body.
pub fn wire_body(req: &ChatRequest, model: &str) -> serde_json::Value {
    serde_json::json!({
        "model": model,
        "messages": [
            {"role": "system", "content": req.system},
            {"role": "user", "content": req.user},
        ],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

/// Pull the completion text out of a chat-completions response body.
pub fn extract_content(body: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(body).ok()?;
    value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

/// Store a response under the request's cache key, creating the directory
/// if needed. Shared by live recording and by tests seeding replay caches.
pub fn record_response(
    cache_dir: &Path,
    req: &ChatRequest,
    model: &str,
    response: &str,
) -> Result<(), LlmError> {
    fs::create_dir_all(cache_dir)?;
    let path = cache_dir.join(format!("{}.txt", cache_key(req, model)));
    fs::write(path, response)?;
    Ok(())
}

struct Throttle {
    min_gap: Duration,
    last: Mutex<Option<Instant>>,
}

impl Throttle {
    fn new(requests_per_minute: u32) -> Throttle {
        let rpm = requests_per_minute.max(1);
        Throttle {
            min_gap: Duration::from_secs_f64(60.0 / f64::from(rpm)),
            last: Mutex::new(None),
        }
    }

    fn wait(&self) {
        let mut last = self.last.lock().expect("throttle lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_gap {
                std::thread::sleep(self.min_gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Mode-dispatched chat client. Shareable across threads; live traffic is
/// serialized through the internal throttle.
pub struct LlmClient {
    mode: ClientMode,
    throttle: Option<Throttle>,
}

impl LlmClient {
    pub fn new(mode: ClientMode) -> LlmClient {
        let throttle = match &mode {
            ClientMode::Live(cfg) => Some(Throttle::new(cfg.requests_per_minute)),
            _ => None,
        };
        LlmClient { mode, throttle }
    }

    /// True when no request can ever leave the process.
    pub fn is_offline(&self) -> bool {
        !matches!(self.mode, ClientMode::Live(_))
    }

    /// True for fixture-backed clients, whose canned answers cover only the
    /// stages a test chooses to script.
    pub fn is_mock(&self) -> bool {
        matches!(self.mode, ClientMode::Mock { .. })
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        req.validate()?;
        match &self.mode {
            ClientMode::Live(cfg) => self.complete_live(cfg, req),
            ClientMode::Replay { cache_dir, model } => {
                let key = cache_key(req, model);
                let path = cache_dir.join(format!("{key}.txt"));
                match fs::read_to_string(&path) {
                    Ok(text) => Ok(text),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        Err(LlmError::CacheMiss {
                            tag: req.tag.clone(),
                            key,
                        })
                    }
                    Err(e) => Err(e.into()),
                }
            }
            ClientMode::Mock { fixture_dir } => self.complete_mock(fixture_dir, req),
        }
    }

    fn complete_mock(&self, fixture_dir: &Path, req: &ChatRequest) -> Result<String, LlmError> {
        let mut fixtures = BTreeMap::new();
        // A missing directory is a mock with nothing scripted, which
        // is the same as matching no fixture.
        let entries = match fs::read_dir(fixture_dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LlmError::FixtureMiss {
                    tag: req.tag.clone(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(&path)?;
                let fixture: MockFixture =
                    serde_json::from_str(&text).map_err(|e| LlmError::InvalidRequest {
                        tag: req.tag.clone(),
                        message: format!("bad fixture {}: {e}", path.display()),
                    })?;
                fixtures.insert(path, fixture);
            }
        }
        for fixture in fixtures.values() {
            if fixture.tag == req.tag
                && fixture.contains.iter().all(|c| req.user.contains(c.as_str()))
            {
                return Ok(fixture.response.clone());
            }
        }
        Err(LlmError::FixtureMiss {
            tag: req.tag.clone(),
        })
    }

    fn complete_live(&self, cfg: &LiveConfig, req: &ChatRequest) -> Result<String, LlmError> {
        let api_key =
            std::env::var(&cfg.api_key_env).map_err(|_| LlmError::MissingCredentials {
                tag: req.tag.clone(),
                env: cfg.api_key_env.clone(),
            })?;
        if let Some(throttle) = &self.throttle {
            throttle.wait();
        }
        let client = reqwest::blocking::Client::new();
        let response = client
            .post(&cfg.endpoint)
            .bearer_auth(api_key)
            .json(&wire_body(req, &cfg.model))
            .send()
            .map_err(|e| LlmError::Transport {
                tag: req.tag.clone(),
                message: e.to_string(),
            })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(LlmError::Http {
                tag: req.tag.clone(),
                status,
            });
        }
        let body = response.text().map_err(|e| LlmError::Transport {
            tag: req.tag.clone(),
            message: e.to_string(),
        })?;
        let content = extract_content(&body).ok_or_else(|| LlmError::Transport {
            tag: req.tag.clone(),
            message: "response body had no choices[0].message.content".to_string(),
        })?;
        record_response(&cfg.cache_dir, req, &cfg.model, &content)?;
        Ok(content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str, user: &str) -> ChatRequest {
        ChatRequest::new(tag, "You are a test system.", user)
    }

    #[test]
    fn cache_key_is_stable_and_content_sensitive() {
        let a = req("classify", "block one");
        let b = req("classify", "block one");
        let c = req("classify", "block two");
        assert_eq!(cache_key(&a, "m"), cache_key(&b, "m"));
        assert_ne!(cache_key(&a, "m"), cache_key(&c, "m"));
        assert_ne!(cache_key(&a, "m"), cache_key(&a, "other-model"));
        assert_eq!(cache_key(&a, "m").len(), 64);
    }

    #[test]
    fn wire_body_matches_chat_completions_shape() {
        let body = wire_body(&req("generate", "hello"), "test-model");
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["messages"][1]["content"], "hello");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 1024);
    }

    #[test]
    fn extract_content_reads_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"Modality: TEXT"}}]}"#;
        assert_eq!(extract_content(body).as_deref(), Some("Modality: TEXT"));
        assert_eq!(extract_content(r#"{"choices":[]}"#), None);
    }

    #[test]
    fn replay_round_trips_recorded_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let request = req("classify", "the handshake paragraph");
        record_response(dir.path(), &request, "test-model", "Modality: TEXT\n").unwrap();

        let client = LlmClient::new(ClientMode::Replay {
            cache_dir: dir.path().to_path_buf(),
            model: "test-model".to_string(),
        });
        assert_eq!(client.complete(&request).unwrap(), "Modality: TEXT\n");
        assert!(client.is_offline());
    }

    #[test]
    fn replay_miss_is_an_error_not_a_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let request = req("classify", "recorded prompt");
        record_response(dir.path(), &request, "test-model", "ok").unwrap();

        let client = LlmClient::new(ClientMode::Replay {
            cache_dir: dir.path().to_path_buf(),
            model: "test-model".to_string(),
        });
        let modified = req("classify", "a different prompt");
        assert!(matches!(
            client.complete(&modified),
            Err(LlmError::CacheMiss { .. })
        ));
    }

    #[test]
    fn mock_matches_by_tag_and_substring_in_filename_order() {
        let dir = tempfile::tempdir().unwrap();
        let specific = MockFixture {
            tag: "generate".to_string(),
            contains: vec!["ack_out".to_string()],
            response: "specific".to_string(),
        };
        let fallback = MockFixture {
            tag: "generate".to_string(),
            contains: vec![],
            response: "fallback".to_string(),
        };
        fs::write(
            dir.path().join("10_ack.json"),
            serde_json::to_string(&specific).unwrap(),
        )
        .unwrap();
        fs::write(
            dir.path().join("99_default.json"),
            serde_json::to_string(&fallback).unwrap(),
        )
        .unwrap();

        let client = LlmClient::new(ClientMode::Mock {
            fixture_dir: dir.path().to_path_buf(),
        });
        assert_eq!(
            client.complete(&req("generate", "spec for ack_out")).unwrap(),
            "specific"
        );
        assert_eq!(
            client.complete(&req("generate", "spec for data_in")).unwrap(),
            "fallback"
        );
        assert!(matches!(
            client.complete(&req("classify", "spec for ack_out")),
            Err(LlmError::FixtureMiss { .. })
        ));
    }

    #[test]
    fn empty_prompts_are_rejected() {
        let client = LlmClient::new(ClientMode::Mock {
            fixture_dir: PathBuf::from("/nonexistent"),
        });
        let bad = ChatRequest::new("classify", "", "user text");
        assert!(matches!(
            client.complete(&bad),
            Err(LlmError::InvalidRequest { .. })
        ));
    }
}
