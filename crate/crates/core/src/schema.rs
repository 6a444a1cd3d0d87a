//! JSON Schema validation of test definitions.
//!
//! The schema is embedded at build time from `schema/test-definition.v1.json`
//! and evaluated with a draft-07 validator. Structural rules live in the
//! schema; the one rule JSON Schema cannot express (item ids unique within a
//! test) is checked by [`parse_definition`].

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::definition::TestDefinition;

/// `$id` of the embedded schema.
pub const SCHEMA_ID: &str = "urn:psytest:test-definition:v1";

const SCHEMA_TEXT: &str = include_str!("../schema/test-definition.v1.json");

/// The embedded schema, byte-for-byte as shipped.
pub fn schema_document() -> &'static str {
    SCHEMA_TEXT
}

fn validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| {
        let schema: serde_json::Value =
            serde_json::from_str(SCHEMA_TEXT).expect("embedded schema is valid JSON");
        jsonschema::draft7::new(&schema).expect("embedded schema compiles")
    })
}

/// One failed rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    /// JSON pointer into the instance; empty for the document root.
    pub path: String,
    /// Schema keyword (`minItems`, `required`, ...) or one of `not_json`,
    /// `unique_item_ids`.
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort();
        violations.dedup();
        Self {
            valid: violations.is_empty(),
            violations,
        }
    }
}

/// Validates raw bytes against the schema. Never fails: unparseable input is
/// reported as a `not_json` violation at the root.
pub fn validate_test(document: &[u8]) -> ValidationReport {
    match serde_json::from_slice::<serde_json::Value>(document) {
        Ok(value) => validate_value(&value),
        Err(e) => ValidationReport::from_violations(vec![Violation {
            path: String::new(),
            rule: "not_json".into(),
            message: e.to_string(),
        }]),
    }
}

pub fn validate_value(value: &serde_json::Value) -> ValidationReport {
    let violations = validator()
        .iter_errors(value)
        .map(|e| Violation {
            path: e.instance_path().to_string(),
            rule: e.kind().keyword().to_string(),
            message: e.to_string(),
        })
        .collect();
    ValidationReport::from_violations(violations)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid test definition ({} violation(s))", report.violations.len())]
pub struct InvalidDefinition {
    pub report: ValidationReport,
}

/// Schema validation plus the uniqueness rule, then deserialization.
pub fn parse_definition(document: &[u8]) -> Result<TestDefinition, InvalidDefinition> {
    let report = validate_test(document);
    if !report.valid {
        return Err(InvalidDefinition { report });
    }
    let def: TestDefinition = serde_json::from_slice(document).map_err(|e| InvalidDefinition {
        report: ValidationReport::from_violations(vec![Violation {
            path: String::new(),
            rule: "type".into(),
            message: e.to_string(),
        }]),
    })?;
    check_semantics(&def)?;
    Ok(def)
}

fn check_semantics(def: &TestDefinition) -> Result<(), InvalidDefinition> {
    if let Some(dup) = def.duplicate_item_id() {
        let index = def
            .items
            .iter()
            .rposition(|i| i.item_id == dup)
            .unwrap_or_default();
        return Err(InvalidDefinition {
            report: ValidationReport::from_violations(vec![Violation {
                path: format!("/items/{index}/item_id"),
                rule: "unique_item_ids".into(),
                message: format!("item id {dup:?} is used more than once"),
            }]),
        });
    }
    Ok(())
}

/// Full validity check of an already-typed definition.
pub fn check_definition(def: &TestDefinition) -> Result<(), InvalidDefinition> {
    let value = serde_json::to_value(def).expect("definitions serialize");
    let report = validate_value(&value);
    if !report.valid {
        return Err(InvalidDefinition { report });
    }
    check_semantics(def)
}

/// Compact JSON with lexicographically ordered object keys.
pub fn canonical_json(value: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key.
    serde_json::to_string(value).expect("JSON values serialize")
}

/// Canonical text form of a valid definition.
pub fn canonicalize(def: &TestDefinition) -> Result<String, InvalidDefinition> {
    check_definition(def)?;
    Ok(canonical_json(
        &serde_json::to_value(def).expect("definitions serialize"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> serde_json::Value {
        json!({
            "test_id": "t1",
            "title": "Minimal",
            "items": [{"item_id": "q1", "kind": "free_text", "prompt": "Say something"}]
        })
    }

    fn paths(report: &ValidationReport) -> Vec<&str> {
        report.violations.iter().map(|v| v.path.as_str()).collect()
    }

    #[test]
    fn schema_is_stable_and_identified() {
        assert_eq!(schema_document().as_bytes(), schema_document().as_bytes());
        let v: serde_json::Value = serde_json::from_str(schema_document()).unwrap();
        assert_eq!(v["$id"], SCHEMA_ID);
        assert_eq!(v["$schema"], "http://json-schema.org/draft-07/schema#");
        assert!(jsonschema::meta::is_valid(&v));
    }

    #[test]
    fn minimal_is_valid() {
        let r = validate_value(&minimal());
        assert!(r.valid, "{r:?}");
    }

    #[test]
    fn empty_items_reported_at_items() {
        let mut doc = minimal();
        doc["items"] = json!([]);
        let r = validate_value(&doc);
        assert!(!r.valid);
        assert_eq!(paths(&r), vec!["/items"]);
        assert_eq!(r.violations[0].rule, "minItems");
    }

    #[test]
    fn not_json_is_a_violation() {
        for junk in [&b"{"[..], b"", &[0xff, 0xfe, 0x00]] {
            let r = validate_test(junk);
            assert!(!r.valid);
            assert_eq!(r.violations[0].rule, "not_json");
            assert_eq!(r.violations[0].path, "");
        }
    }

    #[test]
    fn option_counts_per_kind() {
        let mut doc = minimal();
        doc["items"][0] = json!({"item_id": "q", "kind": "likert", "prompt": "p",
            "options": ["1","2","3","4","5","6","7","8","9","10","11","12"]});
        assert_eq!(paths(&validate_value(&doc)), vec!["/items/0/options"]);

        doc["items"][0] = json!({"item_id": "q", "kind": "single_choice", "prompt": "p", "options": ["a"]});
        assert_eq!(paths(&validate_value(&doc)), vec!["/items/0/options"]);

        doc["items"][0] = json!({"item_id": "q", "kind": "multi_choice", "prompt": "p"});
        assert!(!validate_value(&doc).valid);

        doc["items"][0] = json!({"item_id": "q", "kind": "free_text", "prompt": "p", "options": ["a"]});
        assert_eq!(paths(&validate_value(&doc)), vec!["/items/0/options"]);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut doc = minimal();
        doc["surprise"] = json!(true);
        assert!(!validate_value(&doc).valid);
        let mut doc = minimal();
        doc["items"][0]["colour"] = json!("red");
        assert!(!validate_value(&doc).valid);
    }

    #[test]
    fn repairing_one_violation_removes_only_it() {
        let mut doc = minimal();
        doc["title"] = json!("");
        doc["time_limit_ms"] = json!(0);
        let before = validate_value(&doc);
        assert_eq!(paths(&before), vec!["/time_limit_ms", "/title"]);
        doc["title"] = json!("Fixed");
        let after = validate_value(&doc);
        assert_eq!(paths(&after), vec!["/time_limit_ms"]);
        assert_eq!(after.violations[0], before.violations[0]);
    }

    #[test]
    fn duplicate_item_ids_rejected_by_parse() {
        let mut doc = minimal();
        doc["items"] = json!([
            {"item_id": "q1", "kind": "free_text", "prompt": "a"},
            {"item_id": "q1", "kind": "free_text", "prompt": "b"}
        ]);
        let bytes = serde_json::to_vec(&doc).unwrap();
        assert!(validate_test(&bytes).valid);
        let err = parse_definition(&bytes).unwrap_err();
        assert_eq!(err.report.violations[0].rule, "unique_item_ids");
        assert_eq!(err.report.violations[0].path, "/items/1/item_id");
    }

    #[test]
    fn canonical_form_ignores_key_order() {
        let a = br#"{"title":"Minimal","test_id":"t1","items":[{"prompt":"Say something","kind":"free_text","item_id":"q1"}]}"#;
        let b = br#"{ "items": [ { "item_id": "q1", "kind": "free_text", "prompt": "Say something" } ], "test_id": "t1", "title": "Minimal" }"#;
        let ca = canonicalize(&parse_definition(a).unwrap()).unwrap();
        let cb = canonicalize(&parse_definition(b).unwrap()).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(
            ca,
            r#"{"description":"","items":[{"capture_latency":false,"item_id":"q1","kind":"free_text","options":[],"prompt":"Say something"}],"randomize_items":false,"test_id":"t1","title":"Minimal"}"#
        );
        let again = canonicalize(&parse_definition(ca.as_bytes()).unwrap()).unwrap();
        assert_eq!(again, ca);
    }

    #[test]
    fn canonicalize_refuses_invalid() {
        let mut def = parse_definition(&serde_json::to_vec(&minimal()).unwrap()).unwrap();
        def.items.clear();
        assert!(canonicalize(&def).is_err());
    }
}
