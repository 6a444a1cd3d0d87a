//! Helpers for driving the `psytest` binary.
#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

pub const TOKEN: &str = "researcher-token";

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_psytest"));
    c.env("RUST_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn core_data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

/// Writes a config (ephemeral ports) and token file into `dir`.
pub fn write_config(dir: &Path) -> PathBuf {
    std::fs::write(
        dir.join("tokens.toml"),
        format!("[[token]]\ntoken = \"{TOKEN}\"\nprincipal = \"ada\"\nrole = \"researcher\"\n"),
    )
    .unwrap();
    let cfg = dir.join("psytest.toml");
    std::fs::write(
        &cfg,
        "listen_addr = \"127.0.0.1:0\"\nadmin_addr = \"127.0.0.1:0\"\ndata_dir = \"data\"\n\
         token_file = \"tokens.toml\"\nreplication_interval_ms = 20\n",
    )
    .unwrap();
    cfg
}

pub struct Served {
    pub child: Child,
    pub public: String,
    pub admin: String,
}

impl Served {
    pub fn start(config: &Path) -> Served {
        let mut child = bin()
            .args(["--json", "--config"])
            .arg(config)
            .arg("serve")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap_or_else(|e| {
            let _ = child.kill();
            panic!("serve did not announce its addresses ({e}): {line:?}")
        });
        Served {
            child,
            public: format!("http://{}", v["public"].as_str().unwrap()),
            admin: format!("http://{}", v["admin"].as_str().unwrap()),
        }
    }

    pub fn sigterm(mut self) -> std::process::ExitStatus {
        let pid = self.child.id().to_string();
        Command::new("kill").args(["-TERM", &pid]).status().unwrap();
        wait_timeout(&mut self.child, Duration::from_secs(30))
    }

    pub fn sigkill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn wait_timeout(child: &mut Child, limit: Duration) -> std::process::ExitStatus {
    let start = std::time::Instant::now();
    loop {
        if let Some(s) = child.try_wait().unwrap() {
            return s;
        }
        if start.elapsed() > limit {
            let _ = child.kill();
            panic!("process did not exit within {limit:?}");
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn http() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .unwrap()
}
