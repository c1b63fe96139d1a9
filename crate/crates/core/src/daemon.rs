//! Wires store, adapters, pipeline and HTTP service into one process.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::adapters::{AdapterRegistry, HttpClient, MappingTable};
use crate::clock::SharedClock;
use crate::config::{CollectorOverlay, ConfigError, DaemonConfig};
use crate::pipeline::{Pipeline, PipelineError};
use crate::service::{router, serve, ApiState};
use crate::store::{Store, StoreConfig, StoreError};

/// Emulated time between retention passes.
pub const RETENTION_EVERY_MS: i64 = 60_000;
const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("http server failed: {0}")]
    Server(io::Error),
}

impl DaemonError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            DaemonError::Config(_) | DaemonError::Pipeline(PipelineError::InvalidSpec(_)) => 2,
            DaemonError::Store(_) | DaemonError::Pipeline(PipelineError::Store(_)) => 3,
            _ => 1,
        }
    }
}

pub struct Daemon {
    store: Arc<Store>,
    pipeline: Pipeline,
    addr: SocketAddr,
    stop: watch::Sender<bool>,
    pipeline_task: JoinHandle<Result<(), PipelineError>>,
    server_task: JoinHandle<io::Result<()>>,
    retention_task: JoinHandle<()>,
}

impl Daemon {
    /// Starts with the built-in adapters.
    pub async fn start(config: DaemonConfig, clock: SharedClock) -> Result<Self, DaemonError> {
        let registry = AdapterRegistry::with_builtins(HttpClient::new(), MappingTable::builtin());
        Self::start_with_registry(config, clock, Arc::new(registry)).await
    }

    pub async fn start_with_registry(
        config: DaemonConfig,
        clock: SharedClock,
        registry: Arc<AdapterRegistry>,
    ) -> Result<Self, DaemonError> {
        config.validate(&registry.tools())?;
        let store = Arc::new(Store::open(
            &config.data_dir,
            StoreConfig {
                chunk_capacity: config.store.chunk_capacity,
                sync_writes: config.store.sync_writes,
                ..StoreConfig::default()
            },
        )?);
        let report = store.recovery_report();
        tracing::info!(dir = %config.data_dir.display(), ?report, "store open");

        let overlay = CollectorOverlay::load(&config.data_dir)?;
        let pipeline = Pipeline::new(
            registry,
            store.clone(),
            clock.clone(),
            config.pipeline.clone(),
        )?;
        for spec in overlay.apply(&config.collectors) {
            pipeline.add_collector(spec)?;
        }

        let bind = format!("{}:{}", config.api.bind, config.api.port);
        let listener = TcpListener::bind(&bind)
            .await
            .map_err(|source| DaemonError::Bind {
                addr: bind.clone(),
                source,
            })?;
        let addr = listener.local_addr().map_err(DaemonError::Server)?;

        let (stop, rx) = watch::channel(false);
        let api = ApiState::new(
            pipeline.clone(),
            &config.tokens,
            Some(config.data_dir.clone()),
        );
        let app = router(api, &config.api);
        let mut server_stop = rx.clone();
        let server_task = tokio::spawn(serve(listener, app, async move {
            let _ = server_stop.wait_for(|s| *s).await;
        }));
        let pipeline_task = {
            let p = pipeline.clone();
            let rx = rx.clone();
            tokio::spawn(async move { p.run(rx).await })
        };
        let retention_task = tokio::spawn(retention_loop(
            store.clone(),
            clock,
            config.retention.clone(),
            rx,
        ));
        tracing::info!(%addr, collectors = pipeline.collectors().len(), "daemon started");
        Ok(Self {
            store,
            pipeline,
            addr,
            stop,
            pipeline_task,
            server_task,
            retention_task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Resolves once ingestion stops on its own, which only happens when
    /// the store fails.
    pub async fn stopped(&mut self) -> Result<(), DaemonError> {
        match (&mut self.pipeline_task).await {
            Ok(r) => r.map_err(DaemonError::from),
            Err(e) => Err(DaemonError::Server(io::Error::other(e.to_string()))),
        }
    }

    /// Stops scraping and serving, then flushes and closes the store.
    pub async fn shutdown(self) -> Result<(), DaemonError> {
        let _ = self.stop.send(true);
        if !self.pipeline_task.is_finished() {
            let _ = tokio::time::timeout(SHUTDOWN_GRACE, self.pipeline_task).await;
        }
        let mut server = self.server_task;
        if tokio::time::timeout(SHUTDOWN_GRACE, &mut server)
            .await
            .is_err()
        {
            server.abort();
        }
        self.retention_task.abort();
        self.store.close()?;
        tracing::info!("daemon stopped");
        Ok(())
    }
}

async fn retention_loop(
    store: Arc<Store>,
    clock: SharedClock,
    policy: crate::store::RetentionPolicy,
    mut stop: watch::Receiver<bool>,
) {
    let every = clock
        .wall_duration(RETENTION_EVERY_MS)
        .max(Duration::from_secs(1));
    loop {
        tokio::select! {
            _ = tokio::time::sleep(every) => {}
            _ = stop.wait_for(|s| *s) => return,
        }
        match store.enforce_retention(&policy, clock.now_ms()) {
            Ok(r) if r.freed_points > 0 => tracing::info!(?r, "retention pass"),
            Ok(_) => {}
            Err(StoreError::StoreClosed) => return,
            Err(e) => tracing::warn!(error = %e, "retention pass failed"),
        }
    }
}
