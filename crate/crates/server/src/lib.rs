//! HTTP front end of the psytest platform.
//!
//! A node serves two listeners over one shared [`ShardedStore`]: the public
//! REST API under `/api/v1` and the administrative API under `/admin/v1`,
//! which is never routed on the public listener. Nodes keep no request state
//! of their own, so several can run against the same store.

pub mod auth;
pub mod config;
pub mod http;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use psytest_core::clock::{Clock, SystemClock};
use psytest_core::{Platform, ShardedStore, StoreError};
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

pub use auth::{TokenStore, TokenFileError};
pub use config::{ConfigError, ServerConfig};
pub use http::{admin_router, public_router, AppState};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tokens(#[from] TokenFileError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// A running API node.
#[derive(Debug)]
pub struct NodeHandle {
    pub public_addr: SocketAddr,
    pub admin_addr: SocketAddr,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<std::io::Result<()>>>,
}

impl NodeHandle {
    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(self) -> Result<(), ServerError> {
        let _ = self.stop.send(true);
        for t in self.tasks {
            t.await.map_err(std::io::Error::other)??;
        }
        Ok(())
    }
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, ServerError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })
}

/// Starts one node (public + admin listener) over `store`.
pub async fn spawn_node(
    store: Arc<ShardedStore>,
    tokens: Arc<TokenStore>,
    clock: Arc<dyn Clock>,
    public_addr: SocketAddr,
    admin_addr: SocketAddr,
) -> Result<NodeHandle, ServerError> {
    let state = AppState {
        platform: Arc::new(Platform::new(store, Arc::clone(&clock))),
        tokens,
        clock,
    };
    let public = bind(public_addr).await?;
    let admin = bind(admin_addr).await?;
    let public_addr = public.local_addr()?;
    let admin_addr = admin.local_addr()?;
    let (stop, rx) = watch::channel(false);
    let serve = |listener: TcpListener, app: axum::Router, mut rx: watch::Receiver<bool>| {
        tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = rx.wait_for(|stop| *stop).await;
                })
                .await
        })
    };
    let tasks = vec![
        serve(public, public_router(state.clone()), rx.clone()),
        serve(admin, admin_router(state), rx),
    ];
    tracing::info!(%public_addr, %admin_addr, "node listening");
    Ok(NodeHandle {
        public_addr,
        admin_addr,
        stop,
        tasks,
    })
}

/// Ships oplog entries to slaves every `interval` until the store closes.
pub fn spawn_replicator(store: Arc<ShardedStore>, interval: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            if store.is_closed() {
                break;
            }
            let s = Arc::clone(&store);
            match tokio::task::spawn_blocking(move || s.replicate_all()).await {
                Ok(Ok(_)) => {}
                Ok(Err(StoreError::StoreClosed)) => break,
                Ok(Err(e)) => tracing::warn!(error = %e, "replication pass failed"),
                Err(e) => tracing::warn!(error = %e, "replication task panicked"),
            }
        }
    })
}

/// Addresses a started server actually bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundAddrs {
    pub public: SocketAddr,
    pub admin: SocketAddr,
}

/// Opens the store, serves until `shutdown` resolves, then closes the store
/// (writing a snapshot of every shard). `on_bound` is told the listening
/// addresses once both sockets are bound.
pub async fn run(
    config: ServerConfig,
    shutdown: impl Future<Output = ()>,
    on_bound: impl FnOnce(BoundAddrs),
) -> Result<(), ServerError> {
    let tokens = match &config.token_file {
        Some(path) => TokenStore::load(path)?,
        None => {
            tracing::warn!("no token_file configured; researcher endpoints will reject every request");
            TokenStore::default()
        }
    };
    let store = {
        let dir = config.data_dir.clone();
        let sc = config.store_config();
        tokio::task::spawn_blocking(move || ShardedStore::open(dir, sc))
            .await
            .map_err(std::io::Error::other)??
    };
    let store = Arc::new(store);
    let node = spawn_node(
        Arc::clone(&store),
        Arc::new(tokens),
        Arc::new(SystemClock),
        config.listen_addr,
        config.admin_addr,
    )
    .await?;
    on_bound(BoundAddrs {
        public: node.public_addr,
        admin: node.admin_addr,
    });
    let replicator = spawn_replicator(
        Arc::clone(&store),
        Duration::from_millis(config.replication_interval_ms),
    );
    shutdown.await;
    tracing::info!("shutting down");
    node.shutdown().await?;
    replicator.abort();
    tokio::task::spawn_blocking(move || store.close())
        .await
        .map_err(std::io::Error::other)??;
    Ok(())
}

/// Resolves on SIGTERM or Ctrl-C.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
