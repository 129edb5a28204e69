//! HTTP chat-completion engine with retries and a per-attempt audit log.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};
use tracing::warn;

use super::parse::parse_refinement;
use super::prompt::build_prompt;
use super::{EngineError, EngineOutput, RefinementEngine};
use crate::flatten::FlatRecord;

/// Environment variable holding the bearer token.
pub const TOKEN_ENV_VAR: &str = "FORENSIC_KG_ENGINE_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteEngineConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
    /// JSON-lines file receiving one entry per attempt.
    pub audit_path: Option<PathBuf>,
}

impl RemoteEngineConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token: std::env::var(TOKEN_ENV_VAR).ok().filter(|t| !t.is_empty()),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            audit_path: None,
        }
    }
}

#[derive(Serialize)]
struct AuditEntry<'a> {
    timestamp: String,
    engine: &'a str,
    attempt: u32,
    batch_uids: Vec<&'a str>,
    request: &'a Value,
    status: Option<u16>,
    raw_response: Option<&'a str>,
    error: Option<String>,
}

pub struct RemoteEngine {
    config: RemoteEngineConfig,
    id: String,
    client: reqwest::blocking::Client,
    audit: Option<Mutex<File>>,
}

impl RemoteEngine {
    pub fn new(config: RemoteEngineConfig) -> Result<Self, EngineError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        let audit = match &config.audit_path {
            Some(p) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| EngineError::Transport(format!("audit log {}: {e}", p.display())))?,
            )),
            None => None,
        };
        let id = format!("remote:{}", config.model);
        Ok(Self {
            config,
            id,
            client,
            audit,
        })
    }

    fn record(&self, entry: &AuditEntry<'_>) {
        if let Some(file) = &self.audit {
            let mut line = serde_json::to_string(entry).expect("audit entry serializes");
            line.push('\n');
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = f.write_all(line.as_bytes()) {
                warn!("audit write failed: {e}");
            }
        }
    }

    fn attempt(&self, body: &Value) -> (Option<u16>, Result<String, EngineError>) {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return (None, Err(EngineError::Transport(e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return (Some(status), Err(EngineError::Transport(e.to_string()))),
        };
        if !(200..300).contains(&status) {
            return (Some(status), Err(EngineError::Status { status, body: text }));
        }
        (Some(status), Ok(text))
    }
}

/// Extracts `choices[0].message.content` from a chat-completion body.
pub fn completion_content(body: &str) -> Result<String, EngineError> {
    let v: Value = serde_json::from_str(body).map_err(|e| EngineError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| EngineError::MalformedResponse("missing choices[0].message.content".into()))
}

fn retryable(e: &EngineError) -> bool {
    match e {
        EngineError::Transport(_) | EngineError::MalformedResponse(_) => true,
        EngineError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl RefinementEngine for RemoteEngine {
    fn id(&self) -> &str {
        &self.id
    }

    fn refine(&self, batch: &[FlatRecord]) -> Result<EngineOutput, EngineError> {
        let prompt = build_prompt(batch)?;
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.instructions},
                {"role": "user", "content": prompt.records},
            ],
        });
        let uids: Vec<&str> = batch.iter().map(|r| r.uid.as_str()).collect();
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let (status, result) = self.attempt(&body);
            let result = result.and_then(|raw| completion_content(&raw).map(|c| (raw, c)));
            match result {
                Ok((raw, content)) => {
                    self.record(&AuditEntry {
                        timestamp: chrono::Utc::now().to_rfc3339(),
                        engine: &self.id,
                        attempt,
                        batch_uids: uids.clone(),
                        request: &body,
                        status,
                        raw_response: Some(&raw),
                        error: None,
                    });
                    let valid: HashSet<String> = uids.iter().map(|u| u.to_string()).collect();
                    let (artifacts, warnings) = parse_refinement(&content, &valid, &self.id);
                    return Ok(EngineOutput { artifacts, warnings });
                }
                Err(e) => {
                    let raw = match &e {
                        EngineError::Status { body, .. } => Some(body.as_str()),
                        _ => None,
                    };
                    self.record(&AuditEntry {
                        timestamp: chrono::Utc::now().to_rfc3339(),
                        engine: &self.id,
                        attempt,
                        batch_uids: uids.clone(),
                        request: &body,
                        status,
                        raw_response: raw,
                        error: Some(e.to_string()),
                    });
                    last = e.to_string();
                    if !retryable(&e) {
                        return Err(e);
                    }
                    if attempt < attempts {
                        std::thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(EngineError::Exhausted { attempts, last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatten::Pairs;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;

    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut s = stream;
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn record() -> FlatRecord {
        FlatRecord {
            database: "core.db".into(),
            table: "UserStore".into(),
            path: "/data/data/com.snapchat.android/databases/".into(),
            uid: "abcd1234_UserStore_114".into(),
            lid: 114,
            pairs: Pairs(vec![("realVal".into(), "x@y.com".into())]),
        }
    }

    fn completion(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    #[test]
    fn retries_then_parses_and_audits() {
        let content = "{\"uid\":\"abcd1234_UserStore_114\",\"entity_type\":\"Email\",\"refined_value\":\"x@y.com\",\"confidence\":9}\nnoise";
        let (url, server) = serve(vec![(503, "busy".into()), (200, completion(content))]);
        let dir = tempfile::tempdir().unwrap();
        let audit = dir.path().join("refine_audit.jsonl");
        let mut cfg = RemoteEngineConfig::new(url, "test-model");
        cfg.backoff_base = Duration::from_millis(1);
        cfg.audit_path = Some(audit.clone());
        cfg.token = Some("t".into());
        let engine = RemoteEngine::new(cfg).unwrap();
        let out = engine.refine(&[record()]).unwrap();
        assert_eq!(out.artifacts.len(), 1);
        assert_eq!(out.artifacts[0].engine, "remote:test-model");
        assert_eq!(out.warnings.len(), 1);

        let bodies = server.join().unwrap();
        let req: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(req["messages"][0]["role"], "system");
        assert!(req["messages"][1]["content"]
            .as_str()
            .unwrap()
            .contains("abcd1234_UserStore_114 | core.db"));

        let log = std::fs::read_to_string(audit).unwrap();
        let entries: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0]["status"], 503);
        assert_eq!(entries[1]["attempt"], 2);
        assert_eq!(entries[1]["batch_uids"][0], "abcd1234_UserStore_114");
    }

    #[test]
    fn client_error_is_not_retried() {
        let (url, server) = serve(vec![(401, "nope".into())]);
        let mut cfg = RemoteEngineConfig::new(url, "m");
        cfg.backoff_base = Duration::from_millis(1);
        let engine = RemoteEngine::new(cfg).unwrap();
        assert!(matches!(
            engine.refine(&[record()]),
            Err(EngineError::Status { status: 401, .. })
        ));
        server.join().unwrap();
    }

    #[test]
    fn exhausts_retries() {
        let (url, server) = serve(vec![(500, "a".into()), (500, "b".into())]);
        let mut cfg = RemoteEngineConfig::new(url, "m");
        cfg.backoff_base = Duration::from_millis(1);
        cfg.max_retries = 1;
        let engine = RemoteEngine::new(cfg).unwrap();
        assert!(matches!(
            engine.refine(&[record()]),
            Err(EngineError::Exhausted { attempts: 2, .. })
        ));
        server.join().unwrap();
    }

    #[test]
    fn content_extraction() {
        assert_eq!(completion_content(&completion("hi")).unwrap(), "hi");
        assert!(completion_content("{}").is_err());
        assert!(completion_content("not json").is_err());
    }
}
