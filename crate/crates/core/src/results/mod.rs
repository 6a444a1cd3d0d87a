//! Result ingestion: idempotent acceptance of result packages, client-time
//! normalization and CSV export.

mod export;
mod model;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::package::{ResultPackage, TestPackage};
use crate::store::{ReadPreference, ShardedStore, StoreError};

pub use export::{export_csv, render_answer, CSV_COLUMNS};
pub use model::{ResponseRecord, SessionEnvelope};

/// Collection holding one document per `(project_id, session_id)`.
pub const SESSIONS: &str = "sessions";

pub fn session_key(project_id: Uuid, session_id: Uuid) -> String {
    format!("{project_id}/{session_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "code", content = "detail")]
pub enum RejectReason {
    UnknownItem,
    NegativeTimestamp,
    NegativeLatency,
    /// `latency_ms` disagrees with `answered_at_client - shown_at_client`.
    LatencyMismatch,
    InvalidAnswer(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: RejectReason,
}

/// An accepted record plus its reconstructed absolute time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedRecord {
    #[serde(flatten)]
    pub record: ResponseRecord,
    /// Best-effort wall-clock time of the answer, derived from the server
    /// receive time. Approximate: it assumes the upload happened right
    /// after the last answer.
    #[serde(with = "crate::timefmt")]
    pub approx_answered_at: DateTime<Utc>,
}

/// Stored form of one ingested session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDocument {
    pub session: SessionEnvelope,
    #[serde(with = "crate::timefmt")]
    pub server_received_at: DateTime<Utc>,
    pub records: Vec<NormalizedRecord>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub duplicate: bool,
    pub rejected: Vec<Rejection>,
    #[serde(with = "crate::timefmt")]
    pub server_received_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("session targets package version {got}, project has version {expected}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("session targets package {got}, project has package {expected}")]
    PackageMismatch { expected: Uuid, got: Uuid },
    #[error("session belongs to project {got}, not {expected}")]
    ProjectMismatch { expected: Uuid, got: Uuid },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Validates client timing and computes latencies and approximate absolute
/// times. Latency is always the client monotonic delta; wall clocks never
/// enter it.
pub fn normalize_timing(
    records: &[ResponseRecord],
    server_received_at: DateTime<Utc>,
) -> (Vec<(usize, NormalizedRecord)>, Vec<Rejection>) {
    let mut ok = Vec::new();
    let mut rejected = Vec::new();
    for (index, r) in records.iter().enumerate() {
        let reason = if r.shown_at_client < 0 || r.answered_at_client < 0 {
            Some(RejectReason::NegativeTimestamp)
        } else if r.answered_at_client < r.shown_at_client {
            Some(RejectReason::NegativeLatency)
        } else if r.latency_ms != r.answered_at_client - r.shown_at_client {
            Some(RejectReason::LatencyMismatch)
        } else {
            None
        };
        match reason {
            Some(reason) => rejected.push(Rejection { index, reason }),
            None => ok.push((index, r)),
        }
    }
    let session_duration = ok
        .iter()
        .map(|(_, r)| r.answered_at_client)
        .max()
        .unwrap_or(0);
    let normalized = ok
        .into_iter()
        .map(|(index, r)| {
            let before_end = Duration::milliseconds(session_duration - r.answered_at_client);
            (
                index,
                NormalizedRecord {
                    record: r.clone(),
                    approx_answered_at: server_received_at - before_end,
                },
            )
        })
        .collect();
    (normalized, rejected)
}

/// Stores a session unless its `(project_id, session_id)` key is already
/// present. Records naming items absent from `package`, or failing timing
/// or answer checks, are rejected one by one.
pub fn ingest(
    store: &ShardedStore,
    server_received_at: DateTime<Utc>,
    project_id: Uuid,
    package: &TestPackage,
    result: &ResultPackage,
) -> Result<IngestReport, IngestError> {
    let session = &result.session;
    if session.project_id != project_id {
        return Err(IngestError::ProjectMismatch {
            expected: project_id,
            got: session.project_id,
        });
    }
    if session.package_id != package.manifest.package_id {
        return Err(IngestError::PackageMismatch {
            expected: package.manifest.package_id,
            got: session.package_id,
        });
    }
    if session.package_version != package.manifest.version {
        return Err(IngestError::VersionMismatch {
            expected: package.manifest.version,
            got: session.package_version,
        });
    }

    let (timed, mut rejected) = normalize_timing(&result.records, server_received_at);
    let mut records = Vec::with_capacity(timed.len());
    for (index, rec) in timed {
        let item = package
            .test(&rec.record.test_id)
            .and_then(|t| t.item(&rec.record.item_id));
        match item {
            None => rejected.push(Rejection {
                index,
                reason: RejectReason::UnknownItem,
            }),
            Some(item) => match item.accepts_answer(&rec.record.answer) {
                Ok(()) => records.push(rec),
                Err(msg) => rejected.push(Rejection {
                    index,
                    reason: RejectReason::InvalidAnswer(msg),
                }),
            },
        }
    }
    rejected.sort_by_key(|r| r.index);

    let doc = SessionDocument {
        session: session.clone(),
        server_received_at,
        records,
        rejected,
    };
    let key = session_key(project_id, session.session_id);
    let body = serde_json::to_value(&doc).expect("session documents serialize");
    let inserted = store.insert_if_absent(SESSIONS, &key, body)?;
    Ok(match inserted {
        Some(_) => IngestReport {
            accepted: doc.records.len(),
            duplicate: false,
            rejected: doc.rejected,
            server_received_at,
        },
        None => IngestReport {
            accepted: 0,
            duplicate: true,
            rejected: Vec::new(),
            server_received_at,
        },
    })
}

/// Sessions of a project ordered by `(started_at_client, session_id)`.
pub fn load_sessions(
    store: &ShardedStore,
    project_id: Uuid,
    pref: ReadPreference,
) -> Result<Vec<SessionDocument>, StoreError> {
    let prefix = format!("{project_id}/");
    let mut out: Vec<SessionDocument> = store
        .scan_prefix(SESSIONS, &prefix, pref)?
        .into_iter()
        .map(|d| {
            serde_json::from_value((*d.body).clone())
                .map_err(|e| StoreError::Corrupt(format!("session {}: {e}", d.key)))
        })
        .collect::<Result<_, _>>()?;
    out.sort_by(|a, b| {
        (a.session.started_at_client, a.session.session_id)
            .cmp(&(b.session.started_at_client, b.session.session_id))
    });
    Ok(out)
}
