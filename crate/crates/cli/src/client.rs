//! Commands that talk to a running server.

use std::time::Duration;

use psytest_core::package::CONTENT_TYPE;
use reqwest::blocking::{Client, Response};
use serde_json::Value;
use uuid::Uuid;

use crate::{demo, CliError};

pub struct Api {
    base: String,
    token: String,
    http: Client,
}

impl Api {
    pub fn new(server: &str, token: &str) -> Result<Self, CliError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(Self {
            base: server.trim_end_matches('/').to_string(),
            token: token.to_string(),
            http,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/v1{path}", self.base)
    }

    fn check(resp: reqwest::Result<Response>) -> Result<Response, CliError> {
        let resp = resp.map_err(|e| CliError::Io(format!("request failed: {e}")))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let body = resp.text().unwrap_or_default();
        Err(CliError::Io(format!("server answered {status}: {body}")))
    }

    fn json(resp: Response) -> Result<Value, CliError> {
        let text = resp.text().map_err(|e| CliError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("bad response body: {e}")))
    }

    pub fn create_project(&self, title: &str) -> Result<Value, CliError> {
        let body = serde_json::json!({ "title": title }).to_string();
        let resp = self
            .http
            .post(self.url("/projects"))
            .bearer_auth(&self.token)
            .header("content-type", "application/json")
            .body(body)
            .send();
        Self::json(Self::check(resp)?)
    }

    pub fn attach_package(&self, project: &str, bytes: Vec<u8>) -> Result<Value, CliError> {
        let resp = self
            .http
            .post(self.url(&format!("/projects/{project}/package")))
            .bearer_auth(&self.token)
            .header("content-type", CONTENT_TYPE)
            .body(bytes)
            .send();
        Self::json(Self::check(resp)?)
    }

    pub fn export_csv(&self, project: Uuid) -> Result<String, CliError> {
        let resp = self
            .http
            .get(self.url(&format!("/projects/{project}/export.csv")))
            .bearer_auth(&self.token)
            .send();
        Self::check(resp)?
            .text()
            .map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Creates a project, attaches the demo package and prints the project.
pub fn seed_demo(api: &Api, title: &str) -> Result<(), CliError> {
    let project = api.create_project(title)?;
    let id = project["project_id"]
        .as_str()
        .ok_or_else(|| CliError::Io("server returned no project_id".into()))?
        .to_string();
    let bytes = demo::package().map_err(|e| CliError::Io(format!("demo package: {e}")))?;
    let project = api.attach_package(&id, bytes)?;
    println!("{project}");
    eprintln!("demo project {id} is collecting; package at /api/v1/projects/{id}/package");
    Ok(())
}

pub fn export(api: &Api, project: Uuid, out: Option<&std::path::Path>) -> Result<(), CliError> {
    let text = api.export_csv(project)?;
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
