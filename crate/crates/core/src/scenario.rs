//! Assembles a network from a [`ScenarioConfig`] and runs it.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::adversary::GrayHoleState;
use crate::alarm::KeyedDigestScheme;
use crate::config::{ConfigError, ScenarioConfig};
use crate::id::NodeId;
use crate::link::LinkModel;
use crate::metrics::{MetricsAccumulator, MetricsError, RunMetrics};
use crate::mobility::{Area, Mobility, MobilityParams};
use crate::network::{DetectionParams, Flow, Network, NetworkSetup, ProtocolParams};
use crate::rng::{RngStreams, StreamId};
use crate::time::SimTime;
use crate::trace::{Tee, TraceRecord, TraceSink};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Who is malicious and who talks to whom.
#[derive(Debug, Clone, PartialEq)]
pub struct Roles {
    pub malicious: BTreeSet<NodeId>,
    pub flows: Vec<(NodeId, NodeId)>,
}

/// Draws adversaries and flow endpoints. Node ids are shuffled with the
/// traffic stream; flows use the first `n - cap` of them and adversaries
/// are picked from the remaining `cap` with the adversary stream, so
/// changing the adversary count leaves the traffic pattern unchanged.
pub fn assign_roles(cfg: &ScenarioConfig, streams: &RngStreams) -> Roles {
    let n = cfg.node_count;
    let cap = cfg.effective_cap();
    let mut traffic = streams.substream(StreamId::Traffic, 0);
    let mut order: Vec<NodeId> = (0..n).map(NodeId::from_index).collect();
    order.shuffle(&mut traffic);
    let (pool, reserve) = order.split_at(n - cap);
    let malicious: BTreeSet<NodeId> = match &cfg.grayhole_ids {
        Some(ids) => ids.iter().copied().collect(),
        None => {
            let mut pick = streams.substream(StreamId::Adversary, 1);
            reserve
                .choose_multiple(&mut pick, cfg.malicious_count)
                .copied()
                .collect()
        }
    };
    let flows = match &cfg.flow_pairs {
        Some(p) => p.clone(),
        None => (0..cfg.flows)
            .map(|_| {
                let src = *pool
                    .choose(&mut traffic)
                    .expect("validated: flow pool has >= 2 nodes");
                loop {
                    let dst = *pool.choose(&mut traffic).expect("non-empty");
                    if dst != src {
                        break (src, dst);
                    }
                }
            })
            .collect(),
    };
    Roles { malicious, flows }
}

fn protocol_params(cfg: &ScenarioConfig) -> Result<ProtocolParams, ConfigError> {
    let detection = if cfg.detection_enabled {
        let period = cfg.detection_period().map_err(ScenarioConfig::invalid)?;
        Some(DetectionParams {
            period,
            threshold_interval: cfg.threshold_interval,
            churn_reference: cfg.churn_reference,
            clear_validity: cfg.clear_validity,
            probe_gap: cfg.probe_gap,
            coop_window: cfg.coop_window,
            propagation: cfg.propagate,
            ..DetectionParams::default()
        })
    } else {
        None
    };
    Ok(ProtocolParams {
        route_lifetime: cfg.route_lifetime,
        discovery_timeout: cfg.discovery_timeout,
        pending_capacity: cfg.pending_capacity,
        rreq_retries: cfg.rreq_retries,
        detection,
        ..ProtocolParams::default()
    })
}

/// Builds everything a [`Network`] needs.
pub fn build_setup(cfg: &ScenarioConfig) -> Result<NetworkSetup, ConfigError> {
    cfg.validate()?;
    let streams = RngStreams::new(cfg.seed);
    let area = Area {
        width: cfg.area_width,
        height: cfg.area_height,
    };
    let mobility = match &cfg.positions {
        Some(p) => Mobility::fixed(area, p),
        None => Mobility::random(
            MobilityParams {
                area,
                max_speed: cfg.max_speed,
                pause: cfg.pause.as_secs_f64(),
                speed_model: cfg.speed_model,
            },
            cfg.node_count,
            &streams,
        ),
    };
    let roles = assign_roles(cfg, &streams);
    let mut init = streams.substream(StreamId::Adversary, 2);
    let group = cfg.collude.then(|| roles.malicious.clone());
    let adversaries: BTreeMap<NodeId, GrayHoleState> = roles
        .malicious
        .iter()
        .map(|&id| {
            let mut gh = GrayHoleState::new(
                cfg.p_gb,
                cfg.p_bg,
                cfg.phase_tick,
                cfg.min_rate,
                cfg.max_rate,
                &mut init,
            );
            gh.victim_set = cfg.victims.clone();
            gh.colluding_group = group.clone();
            gh.accomplices = roles
                .malicious
                .iter()
                .copied()
                .filter(|&m| m != id)
                .collect();
            if cfg.collude {
                gh.bad_mouth = cfg.bad_mouth.clone();
            }
            gh.sync_evasion = cfg.sync_evasion;
            (id, gh)
        })
        .collect();
    let interval = SimTime::from_secs_f64(1.0 / cfg.packet_rate);
    let mut starts = streams.substream(StreamId::Traffic, 1);
    let flows = roles
        .flows
        .iter()
        .enumerate()
        .map(|(i, &(src, dst))| Flow {
            id: i as u32,
            src,
            dst,
            interval,
            start: SimTime::from_micros(starts.random_range(0..interval.as_micros().max(1))),
            payload_bytes: cfg.payload,
            next_seq: 0,
        })
        .collect();
    Ok(NetworkSetup {
        mobility,
        link: LinkModel {
            range: cfg.range,
            base_loss_prob: cfg.base_loss_prob,
            buffer_capacity: cfg.buffer_capacity,
            per_hop_latency: cfg.per_hop_latency,
        },
        params: protocol_params(cfg)?,
        adversaries,
        flows,
        scheme: Box::new(KeyedDigestScheme::new(cfg.node_count, cfg.k, &streams)),
        streams,
    })
}

/// Runs to `cfg.duration`, streaming every record into `sink`.
pub fn run_with_sink(
    cfg: &ScenarioConfig,
    sink: &mut dyn TraceSink,
) -> Result<RunMetrics, ScenarioError> {
    let setup = build_setup(cfg)?;
    let mut acc = MetricsAccumulator::new();
    {
        let mut tee = Tee {
            first: &mut acc,
            second: sink,
        };
        let mut net = Network::new(setup, &mut tee);
        net.run_until(cfg.duration);
        net.finish();
    }
    Ok(acc.finish()?)
}

/// Runs without keeping the trace.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunMetrics, ScenarioError> {
    run_with_sink(cfg, &mut crate::trace::NullSink)
}

/// Runs and returns the full trace alongside the metrics.
pub fn run_traced(cfg: &ScenarioConfig) -> Result<(RunMetrics, Vec<TraceRecord>), ScenarioError> {
    let mut trace = Vec::new();
    let m = run_with_sink(cfg, &mut trace)?;
    Ok((m, trace))
}
