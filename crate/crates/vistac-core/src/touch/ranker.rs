//! Common-sense part ranking behind a pluggable interface: a deterministic
//! mock table for offline runs and tests, and a chat-completions-style
//! remote endpoint with structured output. Ranker failures soft-fail to an
//! empty ranking; the pipeline then orders touches geometrically.

use super::PartRanking;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::time::Duration;

/// Query for a part ranking: a class hint and optionally a base64 PNG of
/// one captured view.
#[derive(Debug, Clone)]
pub struct RankQuery {
    pub class_hint: String,
    pub image_png_b64: Option<String>,
}

pub trait CommonSenseRanker {
    /// Never fails hard: degraded rankers return `PartRanking::empty()`.
    fn query(&self, q: &RankQuery) -> PartRanking;
}

/// Shipped lookup table, versioned JSON under `data/`.
#[derive(Debug, Clone)]
pub struct MockRanker {
    table: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct MockTableFile {
    version: u32,
    #[allow(dead_code)]
    #[serde(default)]
    comment: String,
    rankings: BTreeMap<String, Vec<String>>,
}

impl MockRanker {
    /// The table compiled into the crate.
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../data/mock_part_rankings.json"))
            .expect("builtin mock ranking table is valid")
    }

    pub fn from_json(json: &str) -> crate::Result<Self> {
        let file: MockTableFile = serde_json::from_str(json)?;
        if file.version != 1 {
            return Err(crate::Error::Config(format!(
                "mock ranking table version {} unsupported",
                file.version
            )));
        }
        Ok(Self { table: file.rankings })
    }

    pub fn from_path(path: &std::path::Path) -> crate::Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl CommonSenseRanker for MockRanker {
    fn query(&self, q: &RankQuery) -> PartRanking {
        let key = q.class_hint.to_lowercase();
        match self.table.get(&key) {
            Some(parts) => PartRanking { label: key, parts: parts.clone() },
            None => {
                log::warn!("mock ranker has no entry for '{key}'; degrading to geometric order");
                PartRanking::empty()
            }
        }
    }
}

/// Remote chat-completions endpoint with a structured-output schema.
/// Endpoint and credentials come from `VISTAC_RANKER_URL`,
/// `VISTAC_RANKER_KEY`, and `VISTAC_RANKER_MODEL`.
#[derive(Debug, Clone)]
pub struct RemoteRanker {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl RemoteRanker {
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("VISTAC_RANKER_URL").ok()?;
        Some(Self {
            endpoint,
            api_key: std::env::var("VISTAC_RANKER_KEY").ok(),
            model: std::env::var("VISTAC_RANKER_MODEL").unwrap_or_else(|_| "gpt-4o".into()),
            timeout: Duration::from_secs(30),
        })
    }

    fn request_body(&self, q: &RankQuery) -> serde_json::Value {
        let mut content = vec![serde_json::json!({
            "type": "text",
            "text": format!(
                "You are given an object of class '{}'. List its part names and rank them by \
                 priority for tactile exploration (geometrically rich or fine structure first). \
                 Answer with JSON only.",
                q.class_hint
            ),
        })];
        if let Some(b64) = &q.image_png_b64 {
            content.push(serde_json::json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{b64}")},
            }));
        }
        serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": "part_ranking",
                    "schema": {
                        "type": "object",
                        "properties": {
                            "label": {"type": "string"},
                            "parts": {"type": "array", "items": {"type": "string"}},
                            "priority": {"type": "array", "items": {"type": "string"}}
                        },
                        "required": ["label", "parts", "priority"],
                        "additionalProperties": false
                    }
                }
            }
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct StructuredRanking {
    label: String,
    #[allow(dead_code)]
    parts: Vec<String>,
    priority: Vec<String>,
}

impl CommonSenseRanker for RemoteRanker {
    fn query(&self, q: &RankQuery) -> PartRanking {
        let attempt = || -> Result<PartRanking, String> {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(self.timeout))
                .build()
                .into();
            let mut req = agent.post(&self.endpoint);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(self.request_body(q))
                .map_err(|e| format!("request failed: {e}"))?;
            let parsed: ChatResponse = resp
                .body_mut()
                .read_json()
                .map_err(|e| format!("bad response envelope: {e}"))?;
            let content = &parsed
                .choices
                .first()
                .ok_or_else(|| "no choices in response".to_string())?
                .message
                .content;
            let structured: StructuredRanking = serde_json::from_str(content)
                .map_err(|e| format!("structured output did not validate: {e}"))?;
            PartRanking::new(structured.label, structured.priority)
                .map_err(|e| format!("ranking invalid: {e}"))
        };
        match attempt() {
            Ok(r) if !r.is_empty() => r,
            Ok(_) => {
                log::warn!("remote ranker returned an empty ranking; degrading");
                PartRanking::empty()
            }
            Err(msg) => {
                log::warn!("remote ranker degraded: {msg}");
                PartRanking::empty()
            }
        }
    }
}
