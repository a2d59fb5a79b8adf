//! Discrete-event MANET simulator with AODV routing, gray-hole adversaries,
//! and cooperative gray-hole detection.

pub mod adversary;
pub mod alarm;
pub mod config;
pub mod detection;
pub mod engine;
pub mod id;
pub mod link;
pub mod message;
pub mod metrics;
pub mod mobility;
pub mod network;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod sweep;
pub mod time;
pub mod trace;

pub use adversary::{GrayHoleState, Phase};
pub use alarm::{AlarmAggregate, AlarmMessage, FaultyList, KeyedDigestScheme, SignatureScheme};
pub use config::{ConfigError, ScenarioConfig};
pub use id::NodeId;
pub use link::{DeliveryOutcome, LinkModel};
pub use metrics::{compute_metrics, RunMetrics};
pub use mobility::{Area, Position};
pub use scenario::{run_scenario, run_traced, run_with_sink, ScenarioError};
pub use sweep::{Axis, SweepRow};
pub use time::SimTime;
pub use trace::{Outcome, RecordKind, TraceRecord};
