use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// Header of one respondent session as uploaded by the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionEnvelope {
    /// Client-generated pseudonymous id.
    pub session_id: Uuid,
    pub project_id: Uuid,
    pub package_id: Uuid,
    pub package_version: u32,
    #[serde(with = "crate::timefmt")]
    pub started_at_client: DateTime<Utc>,
    #[serde(default)]
    pub client_info: BTreeMap<String, String>,
    /// Seed used by the player to shuffle items, when any test randomizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation_seed: Option<u64>,
}

/// One answered item. Times are milliseconds since session start on the
/// client's monotonic clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub test_id: String,
    pub item_id: String,
    pub answer: serde_json::Value,
    pub shown_at_client: i64,
    pub answered_at_client: i64,
    /// Always `answered_at_client - shown_at_client`.
    pub latency_ms: i64,
}

impl ResponseRecord {
    pub fn new(
        test_id: impl Into<String>,
        item_id: impl Into<String>,
        answer: serde_json::Value,
        shown_at_client: i64,
        answered_at_client: i64,
    ) -> Self {
        Self {
            test_id: test_id.into(),
            item_id: item_id.into(),
            answer,
            shown_at_client,
            answered_at_client,
            latency_ms: answered_at_client.saturating_sub(shown_at_client),
        }
    }
}
