//! Core of the psytest research platform: the single-file package format,
//! the test-definition schema, the sharded replicated document store, result
//! ingestion and population analytics, and the platform operations exposed
//! over HTTP by `psytest-server`.

pub mod analytics;
pub mod api_error;
pub mod clock;
pub mod definition;
pub mod package;
pub mod results;
pub mod schema;
pub mod service;
pub mod store;
pub mod timefmt;

pub use api_error::{ApiError, ErrorCode};
pub use definition::{Item, ItemKind, TestDefinition};
pub use package::{
    build_result_package, build_test_package, parse_package, verify_integrity, ManifestDraft,
    Package, PackageError, PackageKind, PackageManifest, ResultPackage, TestPackage,
};
pub use service::Platform;
pub use store::{ReadPreference, ShardedStore, StoreConfig, StoreError};
