//! Single-file package container.
//!
//! A package is a canonical stored ZIP archive (see [`zip`]) holding a
//! `manifest.json` plus either test definitions and assets (`kind = tests`)
//! or one respondent session (`kind = results`).
//!
//! ```text
//! manifest.json               package metadata + SHA-256 of every other entry
//! tests/<test_id>/test.json   canonical test definition
//! assets/<path>               images and other files referenced by items
//! results/records.json        session envelope + response records
//! ```

pub mod zip;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::definition::{is_valid_asset_path, TestDefinition};
use crate::results::{ResponseRecord, SessionEnvelope};
use crate::schema::{self, ValidationReport};

/// Containers larger than this are refused on build and parse.
pub const MAX_CONTAINER_BYTES: usize = 64 * 1024 * 1024;

pub const MANIFEST_PATH: &str = "manifest.json";
pub const RESULTS_PATH: &str = "results/records.json";
pub const ASSETS_PREFIX: &str = "assets/";
pub const TESTS_PREFIX: &str = "tests/";
const TEST_FILE: &str = "/test.json";

/// Media type used by the HTTP endpoints that carry containers.
pub const CONTENT_TYPE: &str = "application/vnd.psytest.package+zip";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackageKind {
    Tests,
    Results,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageManifest {
    pub package_id: Uuid,
    pub version: u32,
    pub kind: PackageKind,
    #[serde(with = "crate::timefmt")]
    pub created_at: DateTime<Utc>,
    pub description: String,
    /// Entry path to lowercase hex SHA-256, one per non-manifest entry.
    pub entry_checksums: BTreeMap<String, String>,
}

/// Caller-supplied manifest fields. Missing values get deterministic
/// defaults: the package id is derived from the entry contents, the version
/// is 1 and the creation time is the Unix epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDraft {
    #[serde(default)]
    pub package_id: Option<Uuid>,
    #[serde(default)]
    pub version: Option<u32>,
    #[serde(default, with = "crate::timefmt::option")]
    pub created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub description: String,
}

impl From<&PackageManifest> for ManifestDraft {
    fn from(m: &PackageManifest) -> Self {
        Self {
            package_id: Some(m.package_id),
            version: Some(m.version),
            created_at: Some(m.created_at),
            description: m.description.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestPackage {
    pub manifest: PackageManifest,
    /// In container order, i.e. by entry path.
    pub tests: Vec<TestDefinition>,
    pub assets: BTreeMap<String, Vec<u8>>,
}

impl TestPackage {
    pub fn test(&self, test_id: &str) -> Option<&TestDefinition> {
        self.tests.iter().find(|t| t.test_id == test_id)
    }

    /// Re-encodes the package from its own manifest fields.
    pub fn to_bytes(&self) -> Result<Vec<u8>, PackageError> {
        build_test_package(&ManifestDraft::from(&self.manifest), &self.tests, &self.assets)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultPackage {
    pub manifest: PackageManifest,
    pub session: SessionEnvelope,
    pub records: Vec<ResponseRecord>,
}

impl ResultPackage {
    pub fn to_bytes(&self) -> Result<Vec<u8>, PackageError> {
        build_result_package(&ManifestDraft::from(&self.manifest), &self.session, &self.records)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Package {
    Tests(TestPackage),
    Results(ResultPackage),
}

impl Package {
    pub fn manifest(&self) -> &PackageManifest {
        match self {
            Package::Tests(p) => &p.manifest,
            Package::Results(p) => &p.manifest,
        }
    }
}

/// Body of `results/records.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultsDocument {
    session: SessionEnvelope,
    records: Vec<ResponseRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackageError {
    #[error("package contains no tests; at least one test is required")]
    EmptyPackage,
    #[error("item {item_id:?} of test {test_id:?} references missing asset {asset:?}")]
    DanglingAssetRef {
        test_id: String,
        item_id: String,
        asset: String,
    },
    #[error("test id {0:?} appears more than once")]
    DuplicateTestId(String),
    #[error("invalid asset path {0:?}")]
    InvalidAssetPath(String),
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("checksum mismatch in entry {entry:?}")]
    ChecksumMismatch { entry: String },
    #[error("container has no {MANIFEST_PATH}")]
    MissingManifest,
    #[error("test definition {entry:?} violates the schema")]
    SchemaViolation {
        entry: String,
        report: ValidationReport,
    },
    #[error("response records are not ordered by shown_at_client (record {index})")]
    RecordsOutOfOrder { index: usize },
    #[error("container is {size} bytes, over the {MAX_CONTAINER_BYTES}-byte limit")]
    TooLarge { size: usize },
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn test_entry_path(test_id: &str) -> String {
    format!("{TESTS_PREFIX}{test_id}{TEST_FILE}")
}

fn encode(
    draft: &ManifestDraft,
    kind: PackageKind,
    mut entries: BTreeMap<String, Vec<u8>>,
) -> Result<Vec<u8>, PackageError> {
    let entry_checksums: BTreeMap<String, String> = entries
        .iter()
        .map(|(path, data)| (path.clone(), sha256_hex(data)))
        .collect();
    let package_id = draft.package_id.unwrap_or_else(|| derive_package_id(&entries));
    let manifest = PackageManifest {
        package_id,
        version: draft.version.unwrap_or(1),
        kind,
        created_at: draft.created_at.unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
        description: draft.description.clone(),
        entry_checksums,
    };
    if manifest.version == 0 {
        return Err(PackageError::MalformedContainer(
            "manifest version must be positive".into(),
        ));
    }
    let manifest_text = schema::canonical_json(
        &serde_json::to_value(&manifest).expect("manifests serialize"),
    );
    entries.insert(MANIFEST_PATH.to_string(), manifest_text.into_bytes());
    let bytes =
        zip::write_archive(&entries).map_err(|e| PackageError::MalformedContainer(e.0))?;
    if bytes.len() > MAX_CONTAINER_BYTES {
        return Err(PackageError::TooLarge { size: bytes.len() });
    }
    Ok(bytes)
}

fn derive_package_id(entries: &BTreeMap<String, Vec<u8>>) -> Uuid {
    let mut h = Sha256::new();
    for (path, data) in entries {
        h.update(path.as_bytes());
        h.update([0u8]);
        h.update((data.len() as u64).to_le_bytes());
        h.update(data);
    }
    let digest = h.finalize();
    let mut buf = [0u8; 16];
    buf.copy_from_slice(&digest[..16]);
    Uuid::new_v8(buf)
}

/// Builds a tests container. Tests are stored under their canonical text
/// and come back from [`parse_package`] ordered by entry path.
pub fn build_test_package(
    draft: &ManifestDraft,
    tests: &[TestDefinition],
    assets: &BTreeMap<String, Vec<u8>>,
) -> Result<Vec<u8>, PackageError> {
    if tests.is_empty() {
        return Err(PackageError::EmptyPackage);
    }
    let mut entries = BTreeMap::new();
    for path in assets.keys() {
        if !is_valid_asset_path(path) {
            return Err(PackageError::InvalidAssetPath(path.clone()));
        }
    }
    for test in tests {
        let entry = test_entry_path(&test.test_id);
        let text = schema::canonicalize(test).map_err(|e| PackageError::SchemaViolation {
            entry: entry.clone(),
            report: e.report,
        })?;
        if entries.insert(entry, text.into_bytes()).is_some() {
            return Err(PackageError::DuplicateTestId(test.test_id.clone()));
        }
        check_asset_refs(test, |a| assets.contains_key(a))?;
    }
    for (path, data) in assets {
        entries.insert(format!("{ASSETS_PREFIX}{path}"), data.clone());
    }
    encode(draft, PackageKind::Tests, entries)
}

fn check_asset_refs(
    test: &TestDefinition,
    exists: impl Fn(&str) -> bool,
) -> Result<(), PackageError> {
    for (item_id, asset) in test.asset_refs() {
        if !exists(asset) {
            return Err(PackageError::DanglingAssetRef {
                test_id: test.test_id.clone(),
                item_id: item_id.to_string(),
                asset: asset.to_string(),
            });
        }
    }
    Ok(())
}

fn check_record_order(records: &[ResponseRecord]) -> Result<(), PackageError> {
    match records
        .windows(2)
        .position(|w| w[1].shown_at_client < w[0].shown_at_client)
    {
        Some(i) => Err(PackageError::RecordsOutOfOrder { index: i + 1 }),
        None => Ok(()),
    }
}

pub fn build_result_package(
    draft: &ManifestDraft,
    session: &SessionEnvelope,
    records: &[ResponseRecord],
) -> Result<Vec<u8>, PackageError> {
    check_record_order(records)?;
    let doc = ResultsDocument {
        session: session.clone(),
        records: records.to_vec(),
    };
    let text = schema::canonical_json(&serde_json::to_value(&doc).expect("results serialize"));
    let mut entries = BTreeMap::new();
    entries.insert(RESULTS_PATH.to_string(), text.into_bytes());
    encode(draft, PackageKind::Results, entries)
}

/// Archive entries after manifest and checksum verification.
struct VerifiedContainer<'a> {
    manifest: PackageManifest,
    entries: Vec<zip::ZipEntry<'a>>,
}

fn open_container(bytes: &[u8]) -> Result<VerifiedContainer<'_>, PackageError> {
    if bytes.len() > MAX_CONTAINER_BYTES {
        return Err(PackageError::TooLarge { size: bytes.len() });
    }
    if bytes.is_empty() {
        return Err(PackageError::MissingManifest);
    }
    let entries =
        zip::read_archive(bytes).map_err(|e| PackageError::MalformedContainer(e.0))?;
    let manifest_entry = entries
        .iter()
        .find(|e| e.name == MANIFEST_PATH)
        .ok_or(PackageError::MissingManifest)?;
    if !manifest_entry.crc_ok {
        return Err(PackageError::ChecksumMismatch {
            entry: MANIFEST_PATH.into(),
        });
    }
    let manifest: PackageManifest = serde_json::from_slice(manifest_entry.data)
        .map_err(|e| PackageError::MalformedContainer(format!("{MANIFEST_PATH}: {e}")))?;
    if manifest.version == 0 {
        return Err(PackageError::MalformedContainer(
            "manifest version must be positive".into(),
        ));
    }
    let present: BTreeSet<&str> = entries
        .iter()
        .map(|e| e.name)
        .filter(|n| *n != MANIFEST_PATH)
        .collect();
    if let Some(extra) = present
        .iter()
        .find(|n| !manifest.entry_checksums.contains_key(**n))
    {
        return Err(PackageError::MalformedContainer(format!(
            "entry {extra:?} is not listed in the manifest"
        )));
    }
    if let Some(missing) = manifest
        .entry_checksums
        .keys()
        .find(|k| !present.contains(k.as_str()))
    {
        return Err(PackageError::MalformedContainer(format!(
            "manifest lists {missing:?} but the container lacks it"
        )));
    }
    for entry in entries.iter().filter(|e| e.name != MANIFEST_PATH) {
        let expected = &manifest.entry_checksums[entry.name];
        if !entry.crc_ok || sha256_hex(entry.data) != *expected {
            return Err(PackageError::ChecksumMismatch {
                entry: entry.name.to_string(),
            });
        }
    }
    Ok(VerifiedContainer { manifest, entries })
}

/// Decodes and fully verifies a container of either kind.
pub fn parse_package(bytes: &[u8]) -> Result<Package, PackageError> {
    let container = open_container(bytes)?;
    match container.manifest.kind {
        PackageKind::Tests => parse_tests(container).map(Package::Tests),
        PackageKind::Results => parse_results(container).map(Package::Results),
    }
}

fn parse_tests(c: VerifiedContainer<'_>) -> Result<TestPackage, PackageError> {
    let mut tests = Vec::new();
    let mut assets = BTreeMap::new();
    for entry in c.entries.iter().filter(|e| e.name != MANIFEST_PATH) {
        if let Some(path) = entry.name.strip_prefix(ASSETS_PREFIX) {
            if !is_valid_asset_path(path) {
                return Err(PackageError::InvalidAssetPath(path.to_string()));
            }
            assets.insert(path.to_string(), entry.data.to_vec());
        } else if let Some(id) = entry
            .name
            .strip_prefix(TESTS_PREFIX)
            .and_then(|rest| rest.strip_suffix(TEST_FILE))
        {
            let def = schema::parse_definition(entry.data).map_err(|e| {
                PackageError::SchemaViolation {
                    entry: entry.name.to_string(),
                    report: e.report,
                }
            })?;
            if def.test_id != id {
                return Err(PackageError::MalformedContainer(format!(
                    "{} holds test {:?}",
                    entry.name, def.test_id
                )));
            }
            tests.push(def);
        } else {
            return Err(PackageError::MalformedContainer(format!(
                "unexpected entry {:?} in a tests package",
                entry.name
            )));
        }
    }
    if tests.is_empty() {
        return Err(PackageError::EmptyPackage);
    }
    for test in &tests {
        check_asset_refs(test, |a| assets.contains_key(a))?;
    }
    Ok(TestPackage {
        manifest: c.manifest,
        tests,
        assets,
    })
}

fn parse_results(c: VerifiedContainer<'_>) -> Result<ResultPackage, PackageError> {
    let mut doc = None;
    for entry in c.entries.iter().filter(|e| e.name != MANIFEST_PATH) {
        if entry.name != RESULTS_PATH {
            return Err(PackageError::MalformedContainer(format!(
                "unexpected entry {:?} in a results package",
                entry.name
            )));
        }
        let parsed: ResultsDocument = serde_json::from_slice(entry.data)
            .map_err(|e| PackageError::MalformedContainer(format!("{RESULTS_PATH}: {e}")))?;
        doc = Some(parsed);
    }
    let doc = doc.ok_or_else(|| {
        PackageError::MalformedContainer(format!("results package lacks {RESULTS_PATH}"))
    })?;
    check_record_order(&doc.records)?;
    Ok(ResultPackage {
        manifest: c.manifest,
        session: doc.session,
        records: doc.records,
    })
}

// ---------------------------------------------------------------------------
// Integrity report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    /// SHA-256 differs from the manifest.
    DigestMismatch,
    /// Stored CRC-32 differs from the data.
    CrcMismatch,
    /// Present in the container but absent from the manifest.
    NotListed,
    /// Listed in the manifest but absent from the container.
    Missing,
    /// No usable manifest to check against; CRC passed.
    Unverified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub path: String,
    pub status: EntryStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum IntegrityFailure {
    MissingManifest,
    MalformedContainer(String),
    BadManifest(String),
    TooLarge(usize),
    EntryFailures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub ok: bool,
    pub failure: Option<IntegrityFailure>,
    pub entries: Vec<EntryCheck>,
}

impl IntegrityReport {
    pub fn failed_entries(&self) -> impl Iterator<Item = &EntryCheck> {
        self.entries.iter().filter(|e| e.status != EntryStatus::Ok)
    }

    fn failed(failure: IntegrityFailure, entries: Vec<EntryCheck>) -> Self {
        Self {
            ok: false,
            failure: Some(failure),
            entries,
        }
    }
}

/// Per-entry integrity check. Failures are report content; this never errs.
pub fn verify_integrity(bytes: &[u8]) -> IntegrityReport {
    if bytes.len() > MAX_CONTAINER_BYTES {
        return IntegrityReport::failed(IntegrityFailure::TooLarge(bytes.len()), vec![]);
    }
    if bytes.is_empty() {
        return IntegrityReport::failed(IntegrityFailure::MissingManifest, vec![]);
    }
    let entries = match zip::read_archive(bytes) {
        Ok(e) => e,
        Err(e) => {
            return IntegrityReport::failed(IntegrityFailure::MalformedContainer(e.0), vec![])
        }
    };
    let crc_only = |e: &zip::ZipEntry<'_>| EntryCheck {
        path: e.name.to_string(),
        status: if e.crc_ok {
            EntryStatus::Unverified
        } else {
            EntryStatus::CrcMismatch
        },
    };

    let Some(manifest_entry) = entries.iter().find(|e| e.name == MANIFEST_PATH) else {
        return IntegrityReport::failed(
            IntegrityFailure::MissingManifest,
            entries.iter().map(crc_only).collect(),
        );
    };
    let manifest = if manifest_entry.crc_ok {
        serde_json::from_slice::<PackageManifest>(manifest_entry.data).map_err(|e| e.to_string())
    } else {
        Err("manifest fails its CRC".to_string())
    };
    let manifest = match manifest {
        Ok(m) => m,
        Err(msg) => {
            let checks = entries
                .iter()
                .map(|e| {
                    if e.name == MANIFEST_PATH {
                        EntryCheck {
                            path: e.name.to_string(),
                            status: if e.crc_ok {
                                EntryStatus::DigestMismatch
                            } else {
                                EntryStatus::CrcMismatch
                            },
                        }
                    } else {
                        crc_only(e)
                    }
                })
                .collect();
            return IntegrityReport::failed(IntegrityFailure::BadManifest(msg), checks);
        }
    };

    let mut checks: Vec<EntryCheck> = entries
        .iter()
        .map(|e| {
            let status = if e.name == MANIFEST_PATH {
                EntryStatus::Ok
            } else if !e.crc_ok {
                EntryStatus::CrcMismatch
            } else {
                match manifest.entry_checksums.get(e.name) {
                    None => EntryStatus::NotListed,
                    Some(d) if *d == sha256_hex(e.data) => EntryStatus::Ok,
                    Some(_) => EntryStatus::DigestMismatch,
                }
            };
            EntryCheck {
                path: e.name.to_string(),
                status,
            }
        })
        .collect();
    for listed in manifest.entry_checksums.keys() {
        if !entries.iter().any(|e| e.name == listed) {
            checks.push(EntryCheck {
                path: listed.clone(),
                status: EntryStatus::Missing,
            });
        }
    }
    let ok = checks.iter().all(|c| c.status == EntryStatus::Ok);
    IntegrityReport {
        ok,
        failure: (!ok).then_some(IntegrityFailure::EntryFailures),
        entries: checks,
    }
}
