//! `netgraf`: run the daemon, generate configs, query a running daemon and
//! launch the testbed emulator.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use netgraf_core::clock::{Clock, CompressedClock, SharedClock, SystemClock};
use netgraf_core::config::{generate_config, DaemonConfig, TEMPLATES};
use netgraf_core::daemon::{Daemon, DaemonError};
use netgraf_core::emulator::{serve_topology, TopologyConfig};
use serde_json::{json, Value};
use thiserror::Error;
use tracing_subscriber::EnvFilter;

pub const TOKEN_ENV: &str = "NETGRAF_TOKEN";
const DEFAULT_URL: &str = "http://127.0.0.1:8686";

#[derive(Debug, Parser)]
#[command(name = "netgraf", version, about = "Unified network monitoring daemon")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the daemon until interrupted.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a complete daemon config for a named layout.
    GenConfig {
        #[arg(long)]
        template: String,
    },
    /// One-shot range query against a running daemon. Reads the token from NETGRAF_TOKEN.
    Query {
        #[arg(long)]
        selector: String,
        /// Epoch milliseconds or RFC 3339.
        #[arg(long)]
        from: String,
        /// Epoch milliseconds or RFC 3339.
        #[arg(long)]
        to: String,
        /// Bucket width in milliseconds.
        #[arg(long)]
        step: i64,
        #[arg(long, default_value = "avg")]
        agg: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long, env = "NETGRAF_URL", default_value = DEFAULT_URL)]
        url: String,
    },
    /// Serve emulated tool endpoints for a topology.
    Emulate {
        /// Topology file; the built-in five-node layout when omitted.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Run emulated time faster than the wall clock, e.g. `60x`.
        #[arg(long)]
        compress: Option<String>,
        /// Listen on 127.0.0.1 with free ports instead of the topology addresses.
        #[arg(long)]
        ephemeral: bool,
        /// Also run a daemon from this config, on the same clock, scraping every endpoint.
        #[arg(long)]
        with_daemon: Option<PathBuf>,
        /// Stop after this many wall-clock seconds.
        #[arg(long = "for")]
        run_for: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("store error: {0}")]
    Store(String),
    #[error("daemon unreachable: {0}")]
    Unreachable(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Store(_) => 3,
            CliError::Unreachable(_) => 4,
            CliError::Auth(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl From<DaemonError> for CliError {
    fn from(e: DaemonError) -> Self {
        match e.exit_code() {
            2 => CliError::Config(e.to_string()),
            3 => CliError::Store(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

fn init_logging(default: &str) {
    let filter = EnvFilter::try_from_env("NETGRAF_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => {
            init_logging("info");
            cmd_run(&config)
        }
        Command::GenConfig { template } => cmd_gen_config(&template),
        Command::Query {
            selector,
            from,
            to,
            step,
            agg,
            format,
            url,
        } => {
            init_logging("warn");
            cmd_query(&selector, &from, &to, step, &agg, format, &url)
        }
        Command::Emulate {
            topology,
            compress,
            ephemeral,
            with_daemon,
            run_for,
        } => {
            init_logging("info");
            cmd_emulate(
                topology.as_deref(),
                compress.as_deref(),
                ephemeral,
                with_daemon.as_deref(),
                run_for,
            )
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netgraf: {e}");
            ExitCode::from(e.code())
        }
    }
}

async fn terminated() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn load_config(path: &Path) -> Result<DaemonConfig, CliError> {
    DaemonConfig::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cmd_run(path: &Path) -> Result<(), CliError> {
    let config = load_config(path)?;
    runtime()?.block_on(async {
        let mut daemon = Daemon::start(config, Arc::new(SystemClock)).await?;
        println!("netgraf listening on {}", daemon.addr());
        let fatal = tokio::select! {
            _ = terminated() => None,
            r = daemon.stopped() => Some(r),
        };
        daemon.shutdown().await?;
        match fatal {
            Some(Err(e)) => Err(CliError::Store(e.to_string())),
            _ => Ok(()),
        }
    })
}

fn cmd_gen_config(template: &str) -> Result<(), CliError> {
    let text = generate_config(template)
        .map_err(|e| CliError::Usage(format!("{e}; available: {}", TEMPLATES.join(", "))))?;
    print!("{text}");
    Ok(())
}

/// Epoch milliseconds or an RFC 3339 instant.
fn parse_instant(flag: &str, s: &str) -> Result<i64, CliError> {
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|d| d.timestamp_millis())
        .map_err(|_| {
            CliError::Usage(format!(
                "--{flag}: `{s}` is neither epoch milliseconds nor RFC 3339"
            ))
        })
}

fn cmd_query(
    selector: &str,
    from: &str,
    to: &str,
    step: i64,
    agg: &str,
    format: Format,
    url: &str,
) -> Result<(), CliError> {
    let (t0, t1) = (parse_instant("from", from)?, parse_instant("to", to)?);
    if t0 >= t1 {
        return Err(CliError::Usage("--from must be before --to".into()));
    }
    if step < 1 {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let token = std::env::var(TOKEN_ENV)
        .ok()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| CliError::Auth(format!("{TOKEN_ENV} is not set")))?;
    let body = json!({ "selector": selector, "t0": t0, "t1": t1, "step_ms": step, "agg": agg });
    let endpoint = format!("{}/api/v1/query_range", url.trim_end_matches('/'));
    let response: Value = runtime()?.block_on(async {
        let resp = reqwest::Client::new()
            .post(&endpoint)
            .bearer_auth(token)
            .json(&body)
            .timeout(Duration::from_secs(30))
            .send()
            .await
            .map_err(|e| CliError::Unreachable(format!("{endpoint}: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| CliError::Unreachable(e.to_string()))?;
        let value: Value = serde_json::from_str(&text).unwrap_or(Value::String(text));
        let message = || {
            value
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or(status.as_str())
                .to_string()
        };
        match status.as_u16() {
            200 => Ok(value),
            401 | 403 => Err(CliError::Auth(message())),
            400 => Err(CliError::Usage(message())),
            _ => Err(CliError::Other(format!(
                "daemon answered {status}: {}",
                message()
            ))),
        }
    })?;
    let mut out = std::io::stdout().lock();
    output::render(&response, format, &mut out).map_err(|e| CliError::Other(e.to_string()))
}

fn parse_factor(s: &str) -> Result<f64, CliError> {
    let f: f64 = s
        .trim_end_matches(['x', 'X'])
        .parse()
        .map_err(|_| CliError::Usage(format!("--compress: `{s}` is not a factor like 60x")))?;
    if f.is_finite() && f > 0.0 {
        Ok(f)
    } else {
        Err(CliError::Usage("--compress must be positive".into()))
    }
}

fn cmd_emulate(
    topology: Option<&Path>,
    compress: Option<&str>,
    ephemeral: bool,
    with_daemon: Option<&Path>,
    run_for: Option<u64>,
) -> Result<(), CliError> {
    let mut topo = match topology {
        Some(p) => TopologyConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => TopologyConfig::reference(),
    };
    if ephemeral {
        topo = topo.ephemeral();
    }
    let clock: SharedClock = match compress {
        Some(c) => Arc::new(CompressedClock::new(SystemClock.now_ms(), parse_factor(c)?)),
        None => Arc::new(SystemClock),
    };
    let daemon_config = with_daemon.map(load_config).transpose()?;
    runtime()?.block_on(async {
        let running = serve_topology(topo, clock.clone())
            .await
            .map_err(|e| CliError::Other(e.to_string()))?;
        for ((node, tool), addr) in running.addrs() {
            println!("{node}\t{}\t{addr}", tool.as_str());
        }
        let daemon = match daemon_config {
            Some(mut cfg) => {
                let interval = cfg.pipeline.interval_ms;
                for spec in running.collector_specs(interval, (interval / 2).clamp(1, 5_000)) {
                    if !cfg.collectors.iter().any(|c| c.id == spec.id) {
                        cfg.collectors.push(spec);
                    }
                }
                let d = Daemon::start(cfg, clock.clone()).await?;
                println!("netgraf listening on {}", d.addr());
                Some(d)
            }
            None => None,
        };
        match run_for {
            Some(s) => {
                tokio::select! {
                    _ = terminated() => {}
                    _ = tokio::time::sleep(Duration::from_secs(s)) => {}
                }
            }
            None => terminated().await,
        }
        if let Some(d) = daemon {
            d.shutdown().await?;
        }
        running.shutdown().await;
        Ok(())
    })
}
