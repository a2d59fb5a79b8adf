#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use grayhole_core::id::nid;
use grayhole_core::network::Network;
use grayhole_core::scenario::build_setup;
use grayhole_core::trace::NullSink;
use grayhole_core::{
    NodeId, Outcome, Position, RecordKind, RunMetrics, ScenarioConfig, SimTime, TraceRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RANGE: f64 = 200.0;

/// Static, lossless, unbounded scenario over fixed positions.
pub fn static_config(positions: &[Position], flows: &[(u32, u32)]) -> ScenarioConfig {
    ScenarioConfig {
        node_count: positions.len(),
        area_width: positions.iter().map(|p| p.x).fold(1.0, f64::max),
        area_height: positions.iter().map(|p| p.y).fold(1.0, f64::max),
        max_speed: 0.0,
        positions: Some(positions.to_vec()),
        flow_pairs: Some(flows.iter().map(|&(a, b)| (nid(a), nid(b))).collect()),
        flows: flows.len(),
        malicious_count: 0,
        base_loss_prob: 0.0,
        buffer_capacity: None,
        ..ScenarioConfig::default()
    }
}

/// Unit-disk adjacency, indexed by slot.
pub fn adjacency(positions: &[Position], range: f64) -> Vec<Vec<usize>> {
    (0..positions.len())
        .map(|i| {
            (0..positions.len())
                .filter(|&j| j != i && positions[i].distance(&positions[j]) <= range)
                .collect()
        })
        .collect()
}

/// Hop distances from `from` to every slot; `None` when unreachable.
pub fn bfs(adj: &[Vec<usize>], from: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[from] = Some(0);
    let mut q = VecDeque::from([from]);
    while let Some(u) = q.pop_front() {
        let d = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// `n` uniform positions in `w`×`h`, redrawn until the unit-disk graph is connected.
pub fn connected_positions(seed: u64, n: usize, w: f64, h: f64) -> Vec<Position> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let pos: Vec<Position> = (0..n)
            .map(|_| Position::new(rng.random::<f64>() * w, rng.random::<f64>() * h))
            .collect();
        let adj = adjacency(&pos, RANGE);
        if bfs(&adj, 0).iter().all(Option::is_some) {
            return pos;
        }
    }
}

/// Ten static nodes around a central node 5 whose honest neighbours are
/// 2, 3, 6 and 8. One-hop flows from 3, 6 and 8 give each of them a
/// cooperator other than node 5; flow 1>4 crosses the centre.
pub fn ring_positions() -> Vec<Position> {
    [
        (100.0, 300.0),
        (250.0, 300.0),
        (550.0, 300.0),
        (700.0, 300.0),
        (400.0, 300.0),
        (400.0, 150.0),
        (550.0, 150.0),
        (400.0, 450.0),
        (250.0, 450.0),
        (550.0, 450.0),
    ]
    .iter()
    .map(|&(x, y)| Position::new(x, y))
    .collect()
}

pub const RING_FLOWS: [(u32, u32); 4] = [(6, 7), (8, 9), (3, 4), (1, 4)];

/// The ring with node 5 as a gray hole pinned in the Bad phase at rate 1.
pub fn black_hole_config(seed: u64) -> ScenarioConfig {
    let mut cfg = static_config(&ring_positions(), &RING_FLOWS);
    cfg.seed = seed;
    cfg.grayhole_ids = Some(vec![nid(5)]);
    cfg.malicious_count = 1;
    cfg.p_gb = 1.0;
    cfg.p_bg = 0.0;
    cfg.min_rate = 1.0;
    cfg.max_rate = 1.0;
    cfg.k = 3;
    cfg
}

/// The ring with colluders 5 and 9 forging alarms against their common
/// honest neighbour 2.
pub fn bad_mouth_config(seed: u64) -> ScenarioConfig {
    let mut cfg = static_config(&ring_positions(), &RING_FLOWS);
    cfg.seed = seed;
    cfg.grayhole_ids = Some(vec![nid(5), nid(9)]);
    cfg.malicious_count = 2;
    cfg.collude = true;
    cfg.bad_mouth = BTreeSet::from([nid(2)]);
    cfg.k = 3;
    cfg.base_loss_prob = 0.01;
    cfg.buffer_capacity = Some(50);
    cfg.duration = SimTime::from_secs(300);
    cfg
}

/// First commit time per (committer, suspect).
pub fn commits(trace: &[TraceRecord]) -> BTreeMap<(u32, u32), SimTime> {
    let mut out = BTreeMap::new();
    for r in trace {
        if r.kind == RecordKind::Commit && r.outcome == Outcome::Committed {
            out.entry((r.src, r.dst)).or_insert(r.t);
        }
    }
    out
}

pub fn ids(xs: &[u32]) -> BTreeSet<NodeId> {
    xs.iter().map(|&x| nid(x)).collect()
}

fn rec(ms: u64, kind: RecordKind, src: u32, dst: u32, outcome: Outcome) -> TraceRecord {
    TraceRecord::new(SimTime::from_millis(ms), kind, src, dst, outcome, 64)
}

/// Twenty records over five nodes, 4 and 5 adversarial.
pub fn hand_trace() -> Vec<TraceRecord> {
    use Outcome::*;
    use RecordKind::*;
    vec![
        rec(0, Roster, 1, 1, Honest),
        rec(0, Roster, 2, 2, Honest),
        rec(0, Roster, 3, 3, Honest),
        rec(0, Roster, 4, 4, Adversary),
        rec(0, Roster, 5, 5, Adversary),
        rec(10, Data, 1, 3, Originated),
        rec(12, Rreq, 1, 2, Delivered),
        rec(12, Rreq, 1, 4, LostChannel),
        rec(16, Rrep, 3, 2, Delivered),
        rec(18, Rrep, 2, 1, OutOfRange),
        rec(20, Data, 1, 2, Delivered),
        rec(22, Data, 2, 3, Delivered),
        rec(22, Data, 1, 3, Received),
        rec(30, Data, 2, 3, Originated),
        rec(30, Data, 2, 4, MaliciouslyDropped),
        rec(50, Alarm, 2, 1, Delivered),
        rec(61, Commit, 2, 4, Committed),
        rec(62, Commit, 1, 3, Committed),
        rec(63, Commit, 5, 2, Committed),
        rec(100, End, 0, 0, Complete),
    ]
}

/// Worked out by hand for [`hand_trace`]: honest {1, 2, 3}; honest
/// committers convict {3, 4} (node 5's commit does not count); fpr 1/3,
/// miss 1/2; 2 originated, 1 received; control transmissions 5 (rreq 2,
/// rrep 2, alarm 1) over 3 CBR hops.
pub fn check_hand_metrics(m: &RunMetrics) -> Result<(), String> {
    let want = [
        ("honest", m.honest as f64, 3.0),
        ("fpr", m.fpr, 1.0 / 3.0),
        ("miss_rate", m.miss_rate, 0.5),
        ("originated", m.originated as f64, 2.0),
        ("delivered", m.delivered as f64, 1.0),
        ("pdr", m.pdr, 0.5),
        ("control", m.control_packets as f64, 5.0),
        ("data_routed", m.data_routed as f64, 3.0),
        ("malicious_drops", m.malicious_drops as f64, 1.0),
        ("overhead_pct", m.overhead_pct, 500.0 / 3.0),
    ];
    for (name, got, exp) in want {
        if (got - exp).abs() > 1e-9 {
            return Err(format!("{name} = {got}, expected {exp}"));
        }
    }
    if m.convicted != ids(&[3, 4]) || m.ground_truth_malicious != ids(&[4, 5]) {
        return Err(format!(
            "convicted {:?} truth {:?}",
            m.convicted, m.ground_truth_malicious
        ));
    }
    Ok(())
}

/// Follows valid next hops from `from` toward `dst`. Returns the hop count
/// when `dst` is reached, `None` when the chain breaks, and panics on a loop.
pub fn walk(net: &Network<'_>, from: NodeId, dst: NodeId) -> Option<u32> {
    let now = net.now();
    let mut seen = BTreeSet::from([from]);
    let mut at = from;
    let mut hops = 0;
    while at != dst {
        let e = net.node(at).routing.table.lookup(dst, now)?;
        at = e.next_hop;
        hops += 1;
        assert!(
            seen.insert(at),
            "routing loop toward {dst} through {at} at {now}"
        );
    }
    Some(hops)
}

/// Discovers a route from node 1 to the node farthest from it on a random
/// connected 20-node topology and compares every hop count with BFS.
pub fn bfs_oracle(seed: u64) -> Result<(), String> {
    let pos = connected_positions(seed, 20, 900.0, 600.0);
    let dist = bfs(&adjacency(&pos, RANGE), 0);
    let (far, d) = dist
        .iter()
        .enumerate()
        .map(|(i, d)| (i, d.unwrap()))
        .max_by_key(|&(i, d)| (d, std::cmp::Reverse(i)))
        .unwrap();
    if d < 2 {
        return Err(format!("seed {seed}: topology too small"));
    }
    let (src, dst) = (NodeId::from_index(0), NodeId::from_index(far));
    let mut cfg = static_config(&pos, &[(src.get(), dst.get())]);
    cfg.seed = seed;
    cfg.detection_enabled = false;
    let mut sink = NullSink;
    let mut net = Network::new(build_setup(&cfg).unwrap(), &mut sink);
    net.run_until(SimTime::from_secs(3));
    let now = net.now();
    let fwd = net
        .node(src)
        .routing
        .table
        .lookup(dst, now)
        .map(|e| u32::from(e.hop_count));
    let back = net
        .node(dst)
        .routing
        .table
        .lookup(src, now)
        .map(|e| u32::from(e.hop_count));
    let got = [fwd, back, walk(&net, src, dst), walk(&net, dst, src)];
    if got.iter().any(|&g| g != Some(d)) {
        return Err(format!("seed {seed}: bfs {d}, route table {got:?}"));
    }
    Ok(())
}
