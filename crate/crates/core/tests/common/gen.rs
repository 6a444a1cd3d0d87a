//! Random generators for packages and result sessions.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use psytest_core::package::{build_result_package, ManifestDraft, TestPackage};
use psytest_core::results::{ResponseRecord, SessionEnvelope};
use psytest_core::{Item, ItemKind, TestDefinition};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use uuid::Uuid;

const KINDS: [ItemKind; 5] = [
    ItemKind::SingleChoice,
    ItemKind::MultiChoice,
    ItemKind::Likert,
    ItemKind::FreeText,
    ItemKind::TimedStimulus,
];

const WORDS: &[&str] = &[
    "often", "never", "I", "feel", "calm", "\"quoted\"", "a,b", "line\nbreak", "naïve",
    "внимание", "😀", "others", "plan", "ahead",
];

fn text(rng: &mut impl Rng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn ident(rng: &mut impl Rng, prefix: &str) -> String {
    format!("{prefix}{}", rng.gen_range(0..1_000_000u32))
}

pub fn random_assets(rng: &mut impl Rng, count: usize) -> BTreeMap<String, Vec<u8>> {
    let mut assets = BTreeMap::new();
    while assets.len() < count {
        let dir = ["img", "audio", "stim/set-1"].choose(rng).unwrap();
        let path = format!("{dir}/{}.bin", ident(rng, "a"));
        let len = rng.gen_range(0..2048);
        assets.insert(path, (0..len).map(|_| rng.gen()).collect());
    }
    assets
}

pub fn random_test(rng: &mut impl Rng, test_id: String, asset_paths: &[String]) -> TestDefinition {
    let n_items = rng.gen_range(1..=12);
    let mut items = Vec::new();
    for i in 0..n_items {
        let kind = *KINDS.choose(rng).unwrap();
        let options = match kind {
            ItemKind::SingleChoice | ItemKind::MultiChoice => {
                (0..rng.gen_range(2..=6)).map(|_| text(rng, 3)).collect()
            }
            ItemKind::Likert => (0..rng.gen_range(2..=11)).map(|_| text(rng, 2)).collect(),
            ItemKind::FreeText => vec![],
            ItemKind::TimedStimulus => (0..rng.gen_range(0..=3)).map(|_| text(rng, 1)).collect(),
        };
        let asset_ref = if !asset_paths.is_empty() && rng.gen_bool(0.3) {
            asset_paths.choose(rng).cloned()
        } else {
            None
        };
        items.push(Item {
            item_id: format!("i{i}"),
            kind,
            prompt: text(rng, 8),
            options,
            asset_ref,
            capture_latency: rng.gen(),
        });
    }
    let time_limit_ms = if rng.gen_bool(0.3) {
        Some(rng.gen_range(1..3_600_000))
    } else {
        None
    };
    TestDefinition {
        test_id,
        title: text(rng, 4),
        description: if rng.gen() { text(rng, 10) } else { String::new() },
        items,
        randomize_items: rng.gen(),
        time_limit_ms,
    }
}

/// Build inputs for a random valid package: 1–10 tests, 0–5 assets.
pub fn random_package_inputs(
    rng: &mut impl Rng,
) -> (ManifestDraft, Vec<TestDefinition>, BTreeMap<String, Vec<u8>>) {
    let n_assets = rng.gen_range(0..=5);
    let assets = random_assets(rng, n_assets);
    let paths: Vec<String> = assets.keys().cloned().collect();
    let n_tests = rng.gen_range(1..=10);
    let mut ids: Vec<String> = Vec::new();
    while ids.len() < n_tests {
        let id = ident(rng, "t");
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    // The codec returns tests ordered by entry path.
    ids.sort_by(|a, b| {
        psytest_core::package::test_entry_path(a).cmp(&psytest_core::package::test_entry_path(b))
    });
    let tests = ids.into_iter().map(|id| random_test(rng, id, &paths)).collect();
    let package_id = Uuid::from_u128(rng.gen());
    let version = rng.gen_range(1..100);
    let created_at = Utc.timestamp_opt(rng.gen_range(0..2_000_000_000), 0).unwrap();
    let draft = ManifestDraft {
        package_id: rng.gen_bool(0.5).then_some(package_id),
        version: rng.gen_bool(0.5).then_some(version),
        created_at: rng.gen_bool(0.5).then_some(created_at),
        description: if rng.gen() { text(rng, 6) } else { String::new() },
    };
    (draft, tests, assets)
}

/// A valid answer for `item`.
pub fn random_answer(rng: &mut impl Rng, item: &Item) -> Value {
    match item.kind {
        ItemKind::SingleChoice | ItemKind::Likert => json!(rng.gen_range(0..item.options.len())),
        ItemKind::MultiChoice => {
            let mut idx: Vec<usize> = (0..item.options.len()).collect();
            idx.shuffle(rng);
            idx.truncate(rng.gen_range(0..=item.options.len()));
            json!(idx)
        }
        ItemKind::FreeText => json!(text(rng, 6)),
        ItemKind::TimedStimulus => {
            if rng.gen() {
                json!({"x": rng.gen_range(0..1920), "y": rng.gen_range(0..1080)})
            } else {
                json!(true)
            }
        }
    }
}

/// One respondent session answering every item of `package` in order.
pub fn random_session(
    rng: &mut impl Rng,
    project_id: Uuid,
    package: &TestPackage,
) -> (SessionEnvelope, Vec<ResponseRecord>) {
    let session = SessionEnvelope {
        session_id: Uuid::from_u128(rng.gen()),
        project_id,
        package_id: package.manifest.package_id,
        package_version: package.manifest.version,
        started_at_client: Utc
            .timestamp_millis_opt(1_540_000_000_000 + rng.gen_range(0..10_000_000_000))
            .unwrap(),
        client_info: BTreeMap::from([("user_agent".to_string(), "test-harness".to_string())]),
        presentation_seed: None,
    };
    let mut t = rng.gen_range(0..500);
    let mut records = Vec::new();
    for test in &package.tests {
        for item in &test.items {
            let shown = t;
            let answered = shown + rng.gen_range(150..8000);
            records.push(ResponseRecord::new(
                test.test_id.clone(),
                item.item_id.clone(),
                random_answer(rng, item),
                shown,
                answered,
            ));
            t = answered + rng.gen_range(0..300);
        }
    }
    (session, records)
}

pub fn session_bytes(session: &SessionEnvelope, records: &[ResponseRecord]) -> Vec<u8> {
    build_result_package(&ManifestDraft::default(), session, records).unwrap()
}
