//! Platform operations behind the public and administrative APIs.
//!
//! [`Platform`] holds no state of its own beyond a cache of decoded
//! packages (derived from immutable stored bytes); every request reads and
//! writes the shared [`ShardedStore`], so any number of API nodes can serve
//! any request.

use std::collections::HashMap;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::analytics::{population_summary, PopulationSummary};
use crate::api_error::{ApiError, ErrorCode};
use crate::clock::Clock;
use crate::package::{parse_package, Package, TestPackage, MAX_CONTAINER_BYTES};
use crate::results::{self, IngestError, IngestReport};
use crate::store::{ReadPreference, ShardStatus, ShardedStore, StoreError};

pub const PROJECTS: &str = "projects";
pub const PACKAGES: &str = "packages";

pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectStatus {
    Draft,
    Collecting,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchProject {
    pub project_id: Uuid,
    pub owner: String,
    pub title: String,
    pub package_id: Option<Uuid>,
    pub status: ProjectStatus,
    #[serde(with = "crate::timefmt")]
    pub created_at: DateTime<Utc>,
}

/// Stored package bytes plus enough metadata to check them.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PackageDocument {
    package_id: Uuid,
    version: u32,
    sha256: String,
    size: usize,
    data: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub session_id: Uuid,
    #[serde(with = "crate::timefmt")]
    pub started_at_client: DateTime<Utc>,
    #[serde(with = "crate::timefmt")]
    pub server_received_at: DateTime<Utc>,
    pub records: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page<T> {
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub items: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthStatus {
    Ok,
    Degraded,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardHealth {
    pub shard_index: u32,
    pub master_up: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthReport {
    pub status: HealthStatus,
    pub shards: Vec<ShardHealth>,
}

/// Shard status plus lag, as shown to administrators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageView {
    pub shard_count: u32,
    pub shards: Vec<ShardStatus>,
}

#[derive(Debug)]
pub struct Platform {
    store: Arc<ShardedStore>,
    clock: Arc<dyn Clock>,
    packages: Mutex<HashMap<Uuid, Arc<TestPackage>>>,
}

impl Platform {
    pub fn new(store: Arc<ShardedStore>, clock: Arc<dyn Clock>) -> Self {
        Self {
            store,
            clock,
            packages: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Arc<ShardedStore> {
        &self.store
    }

    fn load_project(&self, project_id: Uuid) -> Result<(ResearchProject, u64), ApiError> {
        let doc = self
            .store
            .get(PROJECTS, &project_id.to_string(), ReadPreference::Master)?
            .ok_or_else(|| ApiError::not_found(format_args!("project {project_id}")))?;
        let project = serde_json::from_value((*doc.body).clone())
            .map_err(|e| ApiError::new(ErrorCode::Internal, format!("stored project: {e}")))?;
        Ok((project, doc.version))
    }

    fn owned_project(&self, owner: &str, project_id: Uuid) -> Result<(ResearchProject, u64), ApiError> {
        let (p, v) = self.load_project(project_id)?;
        if p.owner != owner {
            return Err(ApiError::new(
                ErrorCode::AuthForbidden,
                format!("project {project_id} belongs to another researcher"),
            ));
        }
        Ok((p, v))
    }

    /// Applies a status transition with an optimistic version check,
    /// re-reading on conflict.
    fn transition(
        &self,
        project_id: Uuid,
        mut apply: impl FnMut(&mut ResearchProject) -> Result<(), ApiError>,
    ) -> Result<ResearchProject, ApiError> {
        loop {
            let (mut project, version) = self.load_project(project_id)?;
            apply(&mut project)?;
            let body = serde_json::to_value(&project).expect("projects serialize");
            match self
                .store
                .put_if_version(PROJECTS, &project_id.to_string(), Some(version), body)
            {
                Ok(_) => return Ok(project),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn create_project(&self, owner: &str, title: &str) -> Result<ResearchProject, ApiError> {
        let project = ResearchProject {
            project_id: Uuid::new_v4(),
            owner: owner.to_string(),
            title: title.to_string(),
            package_id: None,
            status: ProjectStatus::Draft,
            created_at: self.clock.now(),
        };
        let body = serde_json::to_value(&project).expect("projects serialize");
        self.store
            .insert_if_absent(PROJECTS, &project.project_id.to_string(), body)?
            .ok_or_else(|| ApiError::new(ErrorCode::Internal, "project id collision"))?;
        Ok(project)
    }

    /// Projects owned by `owner`, oldest first.
    pub fn list_projects(&self, owner: &str) -> Result<Vec<ResearchProject>, ApiError> {
        let mut out: Vec<ResearchProject> = self
            .store
            .scan(PROJECTS, ReadPreference::Master)?
            .into_iter()
            .filter_map(|d| serde_json::from_value::<ResearchProject>((*d.body).clone()).ok())
            .filter(|p| p.owner == owner)
            .collect();
        out.sort_by(|a, b| (a.created_at, a.project_id).cmp(&(b.created_at, b.project_id)));
        Ok(out)
    }

    pub fn get_project(&self, project_id: Uuid) -> Result<ResearchProject, ApiError> {
        self.load_project(project_id).map(|(p, _)| p)
    }

    /// Validates and stores a tests package, then moves the project from
    /// draft to collecting.
    pub fn attach_package(
        &self,
        owner: &str,
        project_id: Uuid,
        bytes: &[u8],
    ) -> Result<ResearchProject, ApiError> {
        if bytes.len() > MAX_CONTAINER_BYTES {
            return Err(ApiError::new(
                ErrorCode::PayloadTooLarge,
                format!("package is {} bytes; limit is {MAX_CONTAINER_BYTES}", bytes.len()),
            ));
        }
        let (project, _) = self.owned_project(owner, project_id)?;
        require_status(&project, ProjectStatus::Draft)?;
        let package = match parse_package(bytes)? {
            Package::Tests(p) => p,
            Package::Results(_) => {
                return Err(ApiError::new(
                    ErrorCode::InvalidPackage,
                    "expected a tests package, got a results package",
                ))
            }
        };
        let package_id = package.manifest.package_id;
        let sha256 = hex::encode(Sha256::digest(bytes));
        let doc = PackageDocument {
            package_id,
            version: package.manifest.version,
            sha256: sha256.clone(),
            size: bytes.len(),
            data: BASE64.encode(bytes),
        };
        let key = package_id.to_string();
        let body = serde_json::to_value(&doc).expect("package documents serialize");
        if self.store.insert_if_absent(PACKAGES, &key, body)?.is_none() {
            let existing = self.load_package_doc(package_id)?;
            if existing.sha256 != sha256 {
                return Err(ApiError::new(
                    ErrorCode::PackageConflict,
                    format!("a different package with id {package_id} is already stored"),
                ));
            }
        }
        self.packages.lock().insert(package_id, Arc::new(package));
        self.transition(project_id, |p| {
            require_status(p, ProjectStatus::Draft)?;
            p.package_id = Some(package_id);
            p.status = ProjectStatus::Collecting;
            Ok(())
        })
    }

    fn load_package_doc(&self, package_id: Uuid) -> Result<PackageDocument, ApiError> {
        let doc = self
            .store
            .get(PACKAGES, &package_id.to_string(), ReadPreference::Master)?
            .ok_or_else(|| ApiError::not_found(format_args!("package {package_id}")))?;
        serde_json::from_value((*doc.body).clone())
            .map_err(|e| ApiError::new(ErrorCode::Internal, format!("stored package: {e}")))
    }

    fn package_bytes(&self, package_id: Uuid) -> Result<Vec<u8>, ApiError> {
        let doc = self.load_package_doc(package_id)?;
        BASE64
            .decode(doc.data.as_bytes())
            .map_err(|e| ApiError::new(ErrorCode::Internal, format!("stored package: {e}")))
    }

    fn decoded_package(&self, package_id: Uuid) -> Result<Arc<TestPackage>, ApiError> {
        if let Some(p) = self.packages.lock().get(&package_id) {
            return Ok(Arc::clone(p));
        }
        let bytes = self.package_bytes(package_id)?;
        let package = match parse_package(&bytes)? {
            Package::Tests(p) => Arc::new(p),
            Package::Results(_) => {
                return Err(ApiError::new(ErrorCode::Internal, "stored package has wrong kind"))
            }
        };
        self.packages.lock().insert(package_id, Arc::clone(&package));
        Ok(package)
    }

    fn attached_package_id(project: &ResearchProject) -> Result<Uuid, ApiError> {
        project
            .package_id
            .ok_or_else(|| ApiError::new(ErrorCode::Internal, "collecting project without package"))
    }

    /// The attached package, byte-identical to what was uploaded.
    pub fn get_package(&self, project_id: Uuid) -> Result<Vec<u8>, ApiError> {
        let (project, _) = self.load_project(project_id)?;
        require_status(&project, ProjectStatus::Collecting)?;
        self.package_bytes(Self::attached_package_id(&project)?)
    }

    pub fn submit_results(&self, project_id: Uuid, bytes: &[u8]) -> Result<IngestReport, ApiError> {
        if bytes.len() > MAX_CONTAINER_BYTES {
            return Err(ApiError::new(
                ErrorCode::PayloadTooLarge,
                format!("result package is {} bytes; limit is {MAX_CONTAINER_BYTES}", bytes.len()),
            ));
        }
        let (project, _) = self.load_project(project_id)?;
        require_status(&project, ProjectStatus::Collecting)?;
        let result = match parse_package(bytes)? {
            Package::Results(r) => r,
            Package::Tests(_) => {
                return Err(ApiError::new(
                    ErrorCode::InvalidPackage,
                    "expected a results package, got a tests package",
                ))
            }
        };
        let package = self.decoded_package(Self::attached_package_id(&project)?)?;
        results::ingest(&self.store, self.clock.now(), project_id, &package, &result).map_err(
            |e| match e {
                IngestError::VersionMismatch { .. } => {
                    ApiError::new(ErrorCode::VersionMismatch, e.to_string())
                }
                IngestError::PackageMismatch { .. } | IngestError::ProjectMismatch { .. } => {
                    ApiError::new(ErrorCode::InvalidPackage, e.to_string())
                }
                IngestError::Store(s) => s.into(),
            },
        )
    }

    pub fn list_results(
        &self,
        owner: &str,
        project_id: Uuid,
        limit: Option<usize>,
        offset: Option<usize>,
    ) -> Result<Page<ResultSummary>, ApiError> {
        self.owned_project(owner, project_id)?;
        let limit = limit.unwrap_or(DEFAULT_PAGE_LIMIT).clamp(1, MAX_PAGE_LIMIT);
        let offset = offset.unwrap_or(0);
        let sessions = results::load_sessions(&self.store, project_id, ReadPreference::Master)?;
        let items = sessions
            .iter()
            .skip(offset)
            .take(limit)
            .map(|s| ResultSummary {
                session_id: s.session.session_id,
                started_at_client: s.session.started_at_client,
                server_received_at: s.server_received_at,
                records: s.records.len(),
                rejected: s.rejected.len(),
            })
            .collect();
        Ok(Page {
            total: sessions.len(),
            limit,
            offset,
            items,
        })
    }

    pub fn export_csv(&self, owner: &str, project_id: Uuid) -> Result<String, ApiError> {
        self.owned_project(owner, project_id)?;
        let sessions = results::load_sessions(&self.store, project_id, ReadPreference::Master)?;
        Ok(results::export_csv(&sessions))
    }

    pub fn health(&self) -> HealthReport {
        let shards: Vec<ShardHealth> = self
            .store
            .shard_status()
            .into_iter()
            .map(|s| ShardHealth {
                shard_index: s.shard_index,
                master_up: s.master_up,
            })
            .collect();
        let status = if self.store.is_closed() {
            HealthStatus::Fail
        } else if shards.iter().all(|s| s.master_up) {
            HealthStatus::Ok
        } else {
            HealthStatus::Degraded
        };
        HealthReport { status, shards }
    }

    // -- administrative operations -------------------------------------

    pub fn close_project(&self, project_id: Uuid) -> Result<ResearchProject, ApiError> {
        self.transition(project_id, |p| {
            require_status(p, ProjectStatus::Collecting)?;
            p.status = ProjectStatus::Closed;
            Ok(())
        })
    }

    /// Computed from slave reads, away from the write path.
    pub fn population_summary(&self, project_id: Uuid) -> Result<PopulationSummary, ApiError> {
        let (project, _) = self.load_project(project_id)?;
        let sessions = results::load_sessions(&self.store, project_id, ReadPreference::SlaveOk)?;
        match project.package_id {
            Some(id) => Ok(population_summary(
                project_id,
                &*self.decoded_package(id)?,
                &sessions,
            )),
            None => Ok(PopulationSummary {
                project_id,
                sessions: 0,
                items: vec![],
            }),
        }
    }

    pub fn storage_view(&self) -> StorageView {
        StorageView {
            shard_count: self.store.shard_map().shard_count,
            shards: self.store.shard_status(),
        }
    }
}

fn require_status(project: &ResearchProject, want: ProjectStatus) -> Result<(), ApiError> {
    if project.status == want {
        return Ok(());
    }
    let code = match want {
        ProjectStatus::Draft => ErrorCode::ProjectNotDraft,
        _ => ErrorCode::ProjectNotCollecting,
    };
    Err(ApiError::new(
        code,
        format!(
            "project {} is {:?}, operation needs {:?}",
            project.project_id, project.status, want
        ),
    ))
}
