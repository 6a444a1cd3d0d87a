//! `pkg build|validate|inspect`.

use std::collections::BTreeMap;
use std::path::Path;

use psytest_core::package::{verify_integrity, IntegrityFailure, ManifestDraft, Package, PackageError};
use psytest_core::schema::parse_definition;
use psytest_core::{build_test_package, parse_package, TestDefinition};
use serde_json::json;

use crate::CliError;

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn package_error(e: PackageError) -> CliError {
    match e {
        PackageError::SchemaViolation { entry, report } => CliError::Invalid(
            report
                .violations
                .iter()
                .map(|v| format!("{entry}: {}: {} ({})", display_path(&v.path), v.message, v.rule))
                .collect(),
        ),
        other => CliError::Invalid(vec![other.to_string()]),
    }
}

fn display_path(p: &str) -> &str {
    if p.is_empty() {
        "/"
    } else {
        p
    }
}

/// Reads `package.json`, `tests/*.json` and `assets/**` from `dir`.
pub fn load_source(
    dir: &Path,
) -> Result<(ManifestDraft, Vec<TestDefinition>, BTreeMap<String, Vec<u8>>), CliError> {
    let manifest_path = dir.join("package.json");
    let draft: ManifestDraft = serde_json::from_slice(&read(&manifest_path)?).map_err(|e| {
        CliError::Invalid(vec![format!("{}: {e}", manifest_path.display())])
    })?;

    let mut test_files = vec![];
    let tests_dir = dir.join("tests");
    if tests_dir.is_dir() {
        for entry in std::fs::read_dir(&tests_dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", tests_dir.display())))?
        {
            let path = entry.map_err(|e| CliError::Io(e.to_string()))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                test_files.push(path);
            }
        }
    }
    test_files.sort();

    let mut tests = vec![];
    let mut violations = vec![];
    for path in &test_files {
        match parse_definition(&read(path)?) {
            Ok(t) => tests.push(t),
            Err(e) => violations.extend(e.report.violations.iter().map(|v| {
                format!("{}: {}: {} ({})", path.display(), display_path(&v.path), v.message, v.rule)
            })),
        }
    }
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }

    let mut assets = BTreeMap::new();
    let assets_dir = dir.join("assets");
    if assets_dir.is_dir() {
        for entry in walkdir::WalkDir::new(&assets_dir).sort_by_file_name() {
            let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(&assets_dir)
                .expect("walkdir stays under its root");
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            assets.insert(rel, read(entry.path())?);
        }
    }
    Ok((draft, tests, assets))
}

pub fn build(dir: &Path, out: &Path, json_out: bool) -> Result<(), CliError> {
    let (draft, tests, assets) = load_source(dir)?;
    let bytes = build_test_package(&draft, &tests, &assets).map_err(package_error)?;
    std::fs::write(out, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let Ok(Package::Tests(pkg)) = parse_package(&bytes) else {
        return Err(CliError::Io("built package failed to re-parse".into()));
    };
    if json_out {
        println!(
            "{}",
            json!({
                "path": out.display().to_string(),
                "bytes": bytes.len(),
                "package_id": pkg.manifest.package_id,
                "tests": pkg.tests.len(),
                "assets": pkg.assets.len(),
            })
        );
    } else {
        println!(
            "wrote {} ({} bytes, {} tests, {} assets)",
            out.display(),
            bytes.len(),
            pkg.tests.len(),
            pkg.assets.len()
        );
    }
    Ok(())
}

pub fn validate(file: &Path, json_out: bool) -> Result<(), CliError> {
    let bytes = read(file)?;
    let report = verify_integrity(&bytes);
    let parsed = if report.ok { Some(parse_package(&bytes)) } else { None };
    if json_out {
        let parse_error = match &parsed {
            Some(Err(e)) => Some(e.to_string()),
            _ => None,
        };
        println!(
            "{}",
            json!({"integrity": report, "valid": matches!(parsed, Some(Ok(_))), "error": parse_error})
        );
    }
    if !report.ok {
        let mut lines: Vec<String> = report
            .failed_entries()
            .map(|e| format!("{}: {:?}", e.path, e.status))
            .collect();
        match &report.failure {
            Some(IntegrityFailure::EntryFailures) | None => {}
            Some(f) => lines.insert(0, format!("{f:?}")),
        }
        return Err(CliError::Invalid(lines));
    }
    match parsed.expect("parsed when integrity holds") {
        Ok(p) => {
            if !json_out {
                println!("{}: valid {:?} package", file.display(), p.manifest().kind);
            }
            Ok(())
        }
        Err(e) => Err(package_error(e)),
    }
}

pub fn inspect(file: &Path, json_out: bool) -> Result<(), CliError> {
    let bytes = read(file)?;
    let package = parse_package(&bytes).map_err(package_error)?;
    match &package {
        Package::Tests(p) => {
            if json_out {
                let tests: Vec<_> = p
                    .tests
                    .iter()
                    .map(|t| json!({"test_id": t.test_id, "title": t.title, "items": t.items.len()}))
                    .collect();
                println!(
                    "{}",
                    json!({"manifest": p.manifest, "tests": tests, "assets": p.assets.keys().collect::<Vec<_>>()})
                );
            } else {
                let m = &p.manifest;
                println!("package {} v{} (tests)", m.package_id, m.version);
                if !m.description.is_empty() {
                    println!("  {}", m.description);
                }
                for t in &p.tests {
                    println!("  test {:<24} {:>3} items  {}", t.test_id, t.items.len(), t.title);
                }
                for (path, data) in &p.assets {
                    println!("  asset {path} ({} bytes)", data.len());
                }
            }
        }
        Package::Results(r) => {
            if json_out {
                println!(
                    "{}",
                    json!({"manifest": r.manifest, "session": r.session, "records": r.records.len()})
                );
            } else {
                println!("package {} v{} (results)", r.manifest.package_id, r.manifest.version);
                println!(
                    "  session {} for project {}, {} records",
                    r.session.session_id,
                    r.session.project_id,
                    r.records.len()
                );
            }
        }
    }
    Ok(())
}
