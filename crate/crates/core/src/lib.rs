//! Core of the netgraf monitoring daemon.

pub mod adapters;
pub mod clock;
pub mod config;
pub mod daemon;
pub mod emulator;
pub mod model;
pub mod pipeline;
pub mod selector;
pub mod service;
pub mod store;

pub use clock::{Clock, SharedClock};
pub use config::DaemonConfig;
pub use daemon::Daemon;
pub use model::{MetricKind, SeriesKey, ToolKind};
pub use selector::Selector;
pub use store::{Aggregator, Store, StoreConfig};
