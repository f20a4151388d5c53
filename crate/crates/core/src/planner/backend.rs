use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::world::{Action, ActionLimits, ActionVerb};

use super::serialize_action;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out (attempt {attempt})")]
    Timeout { attempt: usize },
    #[error("transport error (attempt {attempt}): {message}")]
    Transport { attempt: usize, message: String },
    #[error("rate limited (attempt {attempt})")]
    RateLimited { attempt: usize },
    #[error("server error {status} (attempt {attempt})")]
    Server { attempt: usize, status: u16 },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed reply: {0}")]
    BadReply(String),
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: usize, last: Box<BackendError> },
    #[error("script: {0}")]
    Script(String),
}

/// One request to a backend.
#[derive(Debug, Clone, Copy)]
pub struct QueryRequest<'a> {
    pub episode_id: &'a str,
    pub step: usize,
    /// 0 for the first try, then 1, 2, ... for re-queries of the same step.
    pub attempt: usize,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub text: String,
    /// Verbatim wire exchange, when there is one.
    pub transcript: Option<String>,
}

impl Reply {
    fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            transcript: None,
        }
    }
}

/// Something that answers prompts. Shared across episodes running in
/// parallel.
pub trait LlmBackend: Send + Sync {
    fn query(&self, req: &QueryRequest<'_>) -> Result<Reply, BackendError>;
}

/// Replays authored responses per episode and step. A script file holds
/// sections headed by `=== step N ===`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    scripts: HashMap<String, Vec<String>>,
    fallback: Option<Vec<String>>,
}

pub fn parse_script(text: &str) -> Result<Vec<String>, BackendError> {
    let mut steps: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(inner) = t.strip_prefix("=== step ").and_then(|r| r.strip_suffix(" ===")) {
            let idx: usize = inner
                .trim()
                .parse()
                .map_err(|_| BackendError::Script(format!("line {}: bad step header", n + 1)))?;
            if let Some(body) = current.take() {
                steps.push(body);
            }
            if idx != steps.len() {
                return Err(BackendError::Script(format!(
                    "line {}: expected step {}, found {idx}",
                    n + 1,
                    steps.len()
                )));
            }
            current = Some(String::new());
        } else if let Some(body) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !t.is_empty() {
            return Err(BackendError::Script(format!("line {}: text before first step", n + 1)));
        }
    }
    if let Some(body) = current {
        steps.push(body);
    }
    Ok(steps
        .into_iter()
        .map(|s| s.trim_end_matches('\n').to_string() + "\n")
        .collect())
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script(mut self, episode_id: impl Into<String>, steps: Vec<String>) -> Self {
        self.scripts.insert(episode_id.into(), steps);
        self
    }

    /// Used for episodes without their own script.
    pub fn with_fallback(mut self, steps: Vec<String>) -> Self {
        self.fallback = Some(steps);
        self
    }

    /// A directory of `<episode-id>.script` files, or one script file used
    /// for every episode.
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| BackendError::Script(format!("{}: {e}", p.display())))
        };
        if path.is_dir() {
            let mut b = Self::new();
            let entries = std::fs::read_dir(path).map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
            for entry in entries.flatten() {
                let p = entry.path();
                if p.extension().is_some_and(|e| e == "script") {
                    let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    let steps = parse_script(&read(&p)?)?;
                    b.scripts.insert(id, steps);
                }
            }
            Ok(b)
        } else {
            Ok(Self::new().with_fallback(parse_script(&read(path)?)?))
        }
    }
}

impl LlmBackend for ScriptedBackend {
    fn query(&self, req: &QueryRequest<'_>) -> Result<Reply, BackendError> {
        let steps = self
            .scripts
            .get(req.episode_id)
            .or(self.fallback.as_ref())
            .ok_or_else(|| BackendError::Script(format!("no script for episode {}", req.episode_id)))?;
        steps
            .get(req.step)
            .map(Reply::text)
            .ok_or_else(|| BackendError::Script(format!("script for {} ends before step {}", req.episode_id, req.step)))
    }
}

/// Always answers with the same well-formed forward move.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

pub const ECHO_RESPONSE: &str = "Thought: keep flying ahead.\nObservation: nothing new.\nPlan: unchanged.\nAction: (straight), (0 degrees), (10 meters)\n";

impl LlmBackend for EchoBackend {
    fn query(&self, _req: &QueryRequest<'_>) -> Result<Reply, BackendError> {
        Ok(Reply::text(ECHO_RESPONSE))
    }
}

/// Uniformly random actions over all verbs, integer degrees and meters.
/// Each (episode, step) gets its own stream, independent of scheduling.
#[derive(Debug, Clone, Copy)]
pub struct RandomBackend {
    pub seed: u64,
    pub limits: ActionLimits,
}

impl RandomBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            limits: ActionLimits::default(),
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl LlmBackend for RandomBackend {
    fn query(&self, req: &QueryRequest<'_>) -> Result<Reply, BackendError> {
        let stream = fnv1a(req.episode_id) ^ (req.step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stream);
        let verb = ActionVerb::ALL[rng.random_range(0..ActionVerb::ALL.len())];
        let action = if verb == ActionVerb::Stop {
            Action::stop()
        } else {
            let deg = rng.random_range(0..=self.limits.max_degree as u32) as f64;
            let dist = rng.random_range(0..=self.limits.max_distance as u32) as f64;
            Action::new(verb, deg, dist)
        };
        Ok(Reply::text(format!("Thought: random.\n{}\n", serialize_action(&action))))
    }
}

pub const DEFAULT_TOKEN_ENV: &str = "STMR_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// `None` leaves sampling at the server default.
    pub temperature: Option<f64>,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout: Duration,
    pub max_retries: usize,
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: "gpt-4o".into(),
            temperature: None,
            token_env: DEFAULT_TOKEN_ENV.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Chat-completions client over HTTP with bounded retry. Rate limits, server
/// errors, timeouts and connection failures are retried with exponential
/// backoff; other HTTP errors fail immediately.
#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    token: Option<String>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent, token }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn attempt(&self, body: &str, attempt: usize) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout { attempt },
            other => BackendError::Transport {
                attempt,
                message: other.to_string(),
            },
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport {
                attempt,
                message: e.to_string(),
            })?;
        match status {
            200..=299 => Ok(text),
            429 => Err(BackendError::RateLimited { attempt }),
            500..=599 => Err(BackendError::Server { attempt, status }),
            _ => Err(BackendError::Rejected { status, body: text }),
        }
    }
}

fn reply_content(body: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::BadReply(e.to_string()))?;
    v["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| BackendError::BadReply("no choices[0].message.content".into()))
}

impl LlmBackend for RemoteBackend {
    fn query(&self, req: &QueryRequest<'_>) -> Result<Reply, BackendError> {
        let body = self.request_body(req.prompt).to_string();
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let factor = 1u32 << (attempt - 1).min(6);
                std::thread::sleep(self.config.backoff * factor);
            }
            match self.attempt(&body, attempt) {
                Ok(resp) => {
                    let text = reply_content(&resp)?;
                    let transcript = json!({"request": serde_json::from_str::<Value>(&body).unwrap_or(Value::Null), "response": resp});
                    return Ok(Reply {
                        text,
                        transcript: Some(serde_json::to_string_pretty(&transcript).expect("json")),
                    });
                }
                Err(e @ BackendError::Rejected { .. }) => return Err(e),
                Err(e) => last = Some(e),
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    fn req(step: usize) -> QueryRequest<'static> {
        QueryRequest {
            episode_id: "ep",
            step,
            attempt: 0,
            prompt: "hello",
        }
    }

    #[test]
    fn scripted_replays_step() {
        let text = "=== step 0 ===\nAction: lift 0 10\n=== step 1 ===\nAction: stop\n";
        let steps = parse_script(text).unwrap();
        let b = ScriptedBackend::new().with_script("ep", steps);
        assert_eq!(b.query(&req(1)).unwrap().text, "Action: stop\n");
        assert!(b.query(&req(2)).is_err());
        assert!(parse_script("=== step 1 ===\n").is_err());
        assert!(parse_script("junk\n=== step 0 ===\n").is_err());
    }

    #[test]
    fn random_is_reproducible() {
        let b = RandomBackend::new(7);
        assert_eq!(b.query(&req(3)).unwrap(), b.query(&req(3)).unwrap());
        let distinct: std::collections::BTreeSet<_> = (0..20).map(|s| b.query(&req(s)).unwrap().text).collect();
        assert!(distinct.len() > 5);
    }

    /// Serves canned `(status, body)` replies in order, recording requests.
    fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        std::thread::spawn(move || {
            for (status, body) in replies {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream);
                let mut len = 0;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(head + &String::from_utf8_lossy(&buf));
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, seen)
    }

    fn fast(url: &str) -> RemoteConfig {
        RemoteConfig {
            timeout: Duration::from_secs(5),
            backoff: Duration::from_millis(1),
            token_env: "STMR_TEST_TOKEN_UNSET".into(),
            ..RemoteConfig::new(url)
        }
    }

    #[test]
    fn remote_retries_then_succeeds() {
        let ok = json!({"choices": [{"message": {"role": "assistant", "content": "Action: stop"}}]}).to_string();
        let (url, seen) = mock_server(vec![(429, "{}".into()), (503, "{}".into()), (200, ok)]);
        let b = RemoteBackend::new(fast(&url));
        let reply = b.query(&req(0)).unwrap();
        assert_eq!(reply.text, "Action: stop");
        assert!(reply.transcript.unwrap().contains("\"request\""));
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen[0].contains("\"model\":\"gpt-4o\""));
        assert!(!seen[0].contains("temperature"));
    }

    #[test]
    fn remote_rejection_is_not_retried() {
        let (url, seen) = mock_server(vec![(401, "nope".into()), (200, "{}".into())]);
        let err = RemoteBackend::new(fast(&url)).query(&req(0)).unwrap_err();
        assert!(matches!(err, BackendError::Rejected { status: 401, .. }));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn remote_unreachable_is_unavailable() {
        // bind then drop to get a port nobody listens on
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let cfg = RemoteConfig {
            max_retries: 2,
            ..fast(&format!("http://127.0.0.1:{port}/v1/chat/completions"))
        };
        let err = RemoteBackend::new(cfg).query(&req(0)).unwrap_err();
        let BackendError::Unavailable { attempts, last } = err else { panic!("{err:?}") };
        assert_eq!(attempts, 3);
        assert!(matches!(*last, BackendError::Transport { .. }));
    }

    #[test]
    fn temperature_is_sent_when_set() {
        let b = RemoteBackend::new(RemoteConfig {
            temperature: Some(0.2),
            ..fast("http://127.0.0.1:1/")
        });
        assert_eq!(b.request_body("x")["temperature"], json!(0.2));
    }
}
