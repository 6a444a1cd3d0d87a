//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

pub mod gen;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use psytest_core::{ManifestDraft, TestDefinition};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// True when `python3` can import every module in `modules`.
pub fn python_has(modules: &[&str]) -> bool {
    let script = modules
        .iter()
        .map(|m| format!("import {m}"))
        .collect::<Vec<_>>()
        .join("; ");
    Command::new("python3")
        .args(["-c", &script])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

/// Loads a package source directory: `package.json`, `tests/*.json`,
/// `assets/**`.
pub fn load_source_dir(
    dir: &Path,
) -> (ManifestDraft, Vec<TestDefinition>, BTreeMap<String, Vec<u8>>) {
    let draft: ManifestDraft =
        serde_json::from_slice(&std::fs::read(dir.join("package.json")).unwrap()).unwrap();
    let mut test_files: Vec<PathBuf> = std::fs::read_dir(dir.join("tests"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    test_files.sort();
    let tests = test_files
        .iter()
        .map(|p| serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap())
        .collect();
    let mut assets = BTreeMap::new();
    let root = dir.join("assets");
    let mut stack = vec![root.clone()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(&root).unwrap().to_string_lossy().replace('\\', "/");
                assets.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    (draft, tests, assets)
}

pub fn fixture_battery() -> (ManifestDraft, Vec<TestDefinition>, BTreeMap<String, Vec<u8>>) {
    load_source_dir(&data_dir().join("fixture_battery"))
}
