//! Deterministic scripted backend for offline runs and tests.
//!
//! A script is a JSONL sequence of `{"match": "queue"|"fingerprint",
//! "key": str|null, "reply": str}`. Queue entries are served FIFO;
//! fingerprint entries are served whenever a request's fingerprint equals
//! `key`, regardless of call order, and are never consumed.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub match_mode: MatchMode,
    #[serde(default)]
    pub key: Option<String>,
    pub reply: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Queue,
    Fingerprint,
}

#[derive(Debug)]
pub struct MockBackend {
    queue: Mutex<VecDeque<String>>,
    by_fingerprint: HashMap<String, String>,
}

impl MockBackend {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> MockBackend {
        let mut queue = VecDeque::new();
        let mut by_fingerprint = HashMap::new();
        for entry in entries {
            match entry.match_mode {
                MatchMode::Queue => queue.push_back(entry.reply),
                MatchMode::Fingerprint => {
                    if let Some(key) = entry.key {
                        by_fingerprint.insert(key, entry.reply);
                    }
                }
            }
        }
        MockBackend { queue: Mutex::new(queue), by_fingerprint }
    }

    /// Convenience for tests: a pure FIFO script.
    pub fn queued<I, S>(replies: I) -> MockBackend
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockBackend::from_entries(
            replies
                .into_iter()
                .map(|r| ScriptEntry {
                    match_mode: MatchMode::Queue,
                    key: None,
                    reply: r.into(),
                })
                .collect(),
        )
    }

    pub(super) fn reply(
        &self,
        _req: &CompletionRequest,
        fingerprint: &str,
    ) -> Result<CompletionResponse, BackendError> {
        let text = if let Some(reply) = self.by_fingerprint.get(fingerprint) {
            reply.clone()
        } else {
            self.queue
                .lock()
                .unwrap()
                .pop_front()
                .ok_or_else(|| BackendError::MockExhausted { fingerprint: fingerprint.to_string() })?
        };
        Ok(CompletionResponse {
            text,
            finish_reason: "stop".into(),
            request_fingerprint: String::new(),
        })
    }
}

/// Load a mock script, reporting the line number of the first bad entry.
pub fn load_mock_script(path: &Path) -> Result<MockBackend, BackendError> {
    let file = File::open(path)
        .map_err(|e| BackendError::Io { path: path.display().to_string(), source: e })?;
    let reader = BufReader::new(file);
    let mut entries = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| BackendError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry =
            serde_json::from_str(&line).map_err(|e| BackendError::ScriptParse {
                path: path.display().to_string(),
                line: line_no + 1,
                message: e.to_string(),
            })?;
        if entry.match_mode == MatchMode::Fingerprint && entry.key.is_none() {
            return Err(BackendError::ScriptParse {
                path: path.display().to_string(),
                line: line_no + 1,
                message: "fingerprint entry requires a key".into(),
            });
        }
        entries.push(entry);
    }
    Ok(MockBackend::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Backend, ChatMessage};

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest {
            messages: vec![ChatMessage::user(text)],
            model_name: "m".into(),
            temperature: 0.0,
            max_tokens: 16,
            seed: None,
        }
    }

    #[test]
    fn queue_serves_in_order_then_exhausts() {
        let backend = Backend::from_mock(MockBackend::queued(["one", "two", "three"]));
        for expected in ["one", "two", "three"] {
            assert_eq!(backend.complete(&request("x")).unwrap().text, expected);
        }
        assert!(matches!(
            backend.complete(&request("x")),
            Err(BackendError::MockExhausted { .. })
        ));
    }

    #[test]
    fn scripted_reply_passes_through() {
        let backend = Backend::from_mock(MockBackend::queued(["hello"]));
        let response = backend.complete(&request("anything")).unwrap();
        assert_eq!(response.text, "hello");
        assert_eq!(response.finish_reason, "stop");
        assert!(!response.request_fingerprint.is_empty());
    }

    #[test]
    fn fingerprint_entries_ignore_call_order() {
        let req_a = request("alpha");
        let req_b = request("beta");
        let entries = vec![
            ScriptEntry {
                match_mode: MatchMode::Fingerprint,
                key: Some(req_a.fingerprint()),
                reply: "for alpha".into(),
            },
            ScriptEntry {
                match_mode: MatchMode::Fingerprint,
                key: Some(req_b.fingerprint()),
                reply: "for beta".into(),
            },
        ];

        // Order 1: a then b. Order 2: b then a. Same mapping both times.
        let run = |first: &CompletionRequest, second: &CompletionRequest| {
            let backend = Backend::from_mock(MockBackend::from_entries(entries.clone()));
            (
                backend.complete(first).unwrap().text,
                backend.complete(second).unwrap().text,
            )
        };
        assert_eq!(run(&req_a, &req_b), ("for alpha".into(), "for beta".into()));
        assert_eq!(run(&req_b, &req_a), ("for beta".into(), "for alpha".into()));
    }

    #[test]
    fn identical_requests_get_identical_replies() {
        let req = request("repeatable");
        let entries = vec![ScriptEntry {
            match_mode: MatchMode::Fingerprint,
            key: Some(req.fingerprint()),
            reply: "same".into(),
        }];
        let backend = Backend::from_mock(MockBackend::from_entries(entries));
        let first = backend.complete(&req).unwrap();
        let second = backend.complete(&req).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn script_parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"match":"queue","key":null,"reply":"ok"}"#,
                "\n",
                r#"{"match":"fingerprint","reply":"missing key"}"#,
                "\n",
            ),
        )
        .unwrap();
        match load_mock_script(&path) {
            Err(BackendError::ScriptParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ScriptParse, got {other:?}"),
        }
    }

    #[test]
    fn single_entry_script_exhausts_on_second_call() {
        let backend = Backend::from_mock(MockBackend::queued(["only"]));
        assert!(backend.complete(&request("a")).is_ok());
        assert!(matches!(
            backend.complete(&request("b")),
            Err(BackendError::MockExhausted { .. })
        ));
    }
}
