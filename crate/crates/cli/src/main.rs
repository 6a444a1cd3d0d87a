//! `psytest`: package tooling, server runner and API client.
//!
//! Exit codes: 0 success, 1 operational error, 2 validation error.
//! Diagnostics go to stderr, data to stdout.

mod client;
mod demo;
mod pkg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psytest_server::{BoundAddrs, ServerConfig};
use uuid::Uuid;

#[derive(Debug)]
pub enum CliError {
    /// Operational failure (I/O, network, configuration).
    Io(String),
    /// The input is invalid; one line per problem.
    Invalid(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "psytest", version, about = "Psychological test packages and research server")]
struct Cli {
    /// Server configuration file (TOML).
    #[arg(long, global = true, env = "PSYTEST_CONFIG")]
    config: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, validate and inspect package files.
    #[command(subcommand)]
    Pkg(PkgCommand),
    /// Run the public and administrative listeners until SIGTERM/Ctrl-C.
    Serve,
    /// Create a project with the demo questionnaire package.
    SeedDemo {
        #[command(flatten)]
        remote: Remote,
        #[arg(long, default_value = "Demo battery")]
        title: String,
    },
    /// Download a project's results as CSV.
    Export {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        project: Uuid,
        /// Write to this file instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Remote {
    /// Base URL; defaults to the configured public listener.
    #[arg(long)]
    server: Option<String>,
    #[arg(long, env = "PSYTEST_TOKEN", hide_env_values = true)]
    token: String,
}

#[derive(Subcommand)]
enum PkgCommand {
    /// Build a tests package from a source directory.
    Build { dir: PathBuf, out: PathBuf },
    /// Verify integrity and schema of a package file.
    Validate { file: PathBuf },
    /// Summarize a package file.
    Inspect { file: PathBuf },
}

fn load_config(path: Option<&std::path::Path>) -> Result<ServerConfig, CliError> {
    ServerConfig::load(path).map_err(|e| CliError::Io(format!("configuration: {e}")))
}

fn server_url(remote: &Remote, config: Option<&std::path::Path>) -> Result<String, CliError> {
    if let Some(s) = &remote.server {
        return Ok(s.clone());
    }
    let cfg = load_config(config)?;
    let mut addr = cfg.listen_addr;
    if addr.ip().is_unspecified() {
        addr.set_ip([127, 0, 0, 1].into());
    }
    Ok(format!("http://{addr}"))
}

fn serve(config: Option<&std::path::Path>, json_out: bool) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let announce = move |addrs: BoundAddrs| {
        if json_out {
            println!(
                "{}",
                serde_json::json!({"public": addrs.public.to_string(), "admin": addrs.admin.to_string()})
            );
        } else {
            println!("public {} admin {}", addrs.public, addrs.admin);
        }
    };
    runtime
        .block_on(psytest_server::run(cfg, psytest_server::shutdown_signal(), announce))
        .map_err(|e| CliError::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Pkg(PkgCommand::Build { dir, out }) => pkg::build(&dir, &out, cli.json),
        Command::Pkg(PkgCommand::Validate { file }) => pkg::validate(&file, cli.json),
        Command::Pkg(PkgCommand::Inspect { file }) => pkg::inspect(&file, cli.json),
        Command::Serve => serve(config, cli.json),
        Command::SeedDemo { remote, title } => {
            let api = client::Api::new(&server_url(&remote, config)?, &remote.token)?;
            client::seed_demo(&api, &title)
        }
        Command::Export {
            remote,
            project,
            out,
        } => {
            let api = client::Api::new(&server_url(&remote, config)?, &remote.token)?;
            client::export(&api, project, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Io(msg) => eprintln!("error: {msg}"),
                CliError::Invalid(lines) => {
                    for l in lines {
                        eprintln!("{l}");
                    }
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
