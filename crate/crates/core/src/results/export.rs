//! RFC 4180 CSV export, one row per stored response record.

use std::fmt::Write;

use super::SessionDocument;
use crate::schema::canonical_json;
use crate::timefmt;

pub const CSV_COLUMNS: [&str; 8] = [
    "session_id",
    "test_id",
    "item_id",
    "answer",
    "shown_at_client",
    "answered_at_client",
    "latency_ms",
    "server_received_at",
];

/// Text form of an answer in exports and frequency tables: strings as-is,
/// anything else as compact canonical JSON.
pub fn render_answer(answer: &serde_json::Value) -> String {
    match answer {
        serde_json::Value::String(s) => s.clone(),
        other => canonical_json(other),
    }
}

fn push_field(out: &mut String, field: &str) {
    if field.contains([',', '"', '\r', '\n']) {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

/// Rows follow session order, then record order within a session. Lines end
/// with CRLF.
pub fn export_csv(sessions: &[SessionDocument]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push_str("\r\n");
    for doc in sessions {
        let session_id = doc.session.session_id.to_string();
        let received = timefmt::format(&doc.server_received_at);
        for n in &doc.records {
            let r = &n.record;
            let fields = [
                session_id.as_str(),
                r.test_id.as_str(),
                r.item_id.as_str(),
                &render_answer(&r.answer),
            ];
            for (i, f) in fields.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_field(&mut out, f);
            }
            let _ = write!(
                out,
                ",{},{},{},",
                r.shown_at_client, r.answered_at_client, r.latency_ms
            );
            push_field(&mut out, &received);
            out.push_str("\r\n");
        }
    }
    out
}
