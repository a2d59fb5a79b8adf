mod common;

use std::collections::BTreeSet;

use common::*;
use grayhole_core::id::nid;
use grayhole_core::network::{Network, Propagation};
use grayhole_core::scenario::build_setup;
use grayhole_core::{
    run_traced, NodeId, Outcome, Position, RecordKind, ScenarioConfig, SimTime, TraceRecord,
};

/// Node 1 sits among 2, 6, 7, 8 and 9 and drops only traffic for node 2.
/// Node 7 talks to node 2 and never to node 1.
fn example_config() -> ScenarioConfig {
    let pos: Vec<Position> = [
        (550.0, 300.0),
        (475.0, 420.0),
        (760.0, 150.0),
        (150.0, 150.0),
        (150.0, 450.0),
        (475.0, 180.0),
        (400.0, 300.0),
        (475.0, 300.0),
        (475.0, 480.0),
    ]
    .iter()
    .map(|&(x, y)| Position::new(x, y))
    .collect();
    let mut cfg = static_config(&pos, &[(7, 2)]);
    cfg.grayhole_ids = Some(vec![nid(1)]);
    cfg.malicious_count = 1;
    cfg.victims = Some(ids(&[2]));
    cfg.p_gb = 1.0;
    cfg.p_bg = 0.0;
    cfg.min_rate = 1.0;
    cfg.max_rate = 1.0;
    cfg.duration = SimTime::from_secs(30);
    cfg
}

#[test]
fn example_walk_through_convicts_for_node_two_only() {
    let (_, trace) = run_traced(&example_config()).unwrap();
    let mine = |r: &&TraceRecord| r.kind == RecordKind::Verdict && r.src == 7 && r.dst == 1;
    let verdicts: Vec<&TraceRecord> = trace.iter().filter(mine).collect();
    assert_eq!(
        verdicts[0].outcome,
        Outcome::Escalate,
        "the probe to CN 2 through node 1 is lost"
    );
    let conviction = verdicts
        .iter()
        .find(|r| r.outcome == Outcome::Malicious)
        .expect("node 7 convicts node 1");
    let nonce = conviction.nonce;
    let probes: Vec<&TraceRecord> = trace
        .iter()
        .filter(|r| r.kind == RecordKind::FurtherProbe && r.nonce == nonce)
        .collect();
    let dropped: BTreeSet<u32> = probes
        .iter()
        .filter(|r| r.outcome == Outcome::MaliciouslyDropped)
        .map(|r| r.src)
        .collect();
    assert_eq!(dropped, BTreeSet::from([2]), "only node 2's probes vanish");
    let arrived = probes
        .iter()
        .filter(|r| r.src == 1 && r.dst == 7 && r.outcome == Outcome::Delivered)
        .count();
    assert_eq!(arrived, 9, "three probes each from 6, 8 and 9 reach node 7");
}

#[test]
fn black_hole_on_the_ring_is_convicted_quickly() {
    let mut cfg = black_hole_config(1);
    cfg.duration = SimTime::from_secs(20);
    let (m, trace) = run_traced(&cfg).unwrap();
    assert_eq!(m.convicted, ids(&[5]));
    assert_eq!(m.fpr, 0.0);
    let committers: BTreeSet<u32> = commits(&trace)
        .keys()
        .filter(|k| k.1 == 5)
        .map(|k| k.0)
        .collect();
    assert!(committers.is_superset(&BTreeSet::from([2, 3, 6, 8])));
}

fn adversarial_trace(seed: u64) -> (grayhole_core::RunMetrics, Vec<TraceRecord>) {
    let cfg = ScenarioConfig {
        seed,
        duration: SimTime::from_secs(300),
        malicious_count: 10,
        ..ScenarioConfig::default()
    };
    run_traced(&cfg).unwrap()
}

#[test]
fn probe_queries_and_notifications_never_touch_the_suspect() {
    for seed in [1u64, 2] {
        let (_, trace) = adversarial_trace(seed);
        let mut checked = 0;
        for r in &trace {
            let hidden = matches!(
                r.kind,
                RecordKind::Notify | RecordKind::ProbeQuery | RecordKind::ProbeReply
            );
            if hidden && r.outcome.is_transmission() {
                let sn = r.suspect.expect("detection traffic names its suspect");
                assert!(r.src != sn && r.dst != sn, "seed {seed}: {r}");
                checked += 1;
            }
        }
        assert!(
            checked > 100,
            "seed {seed}: only {checked} hidden transmissions"
        );
    }
}

#[test]
fn committed_nodes_never_send_to_the_convicted() {
    for seed in [1u64, 2] {
        let (m, trace) = adversarial_trace(seed);
        assert!(!m.convicted.is_empty());
        let done = commits(&trace);
        for r in &trace {
            if !r.outcome.is_transmission() {
                continue;
            }
            // Arrivals are stamped on delivery, one hop after the send. A send
            // in the same instant as the commit came from an earlier event.
            let sent = match r.outcome {
                Outcome::Delivered | Outcome::MaliciouslyDropped => r.t - SimTime::from_millis(2),
                _ => r.t,
            };
            if let Some(&t) = done.get(&(r.src, r.dst)) {
                assert!(
                    sent <= t,
                    "seed {seed}: {} sent to convicted {} after {t}: {r}",
                    r.src,
                    r.dst
                );
            }
        }
    }
}

fn faulty_lists(cfg: &ScenarioConfig) -> Vec<BTreeSet<NodeId>> {
    let mut sink = grayhole_core::trace::NullSink;
    let mut net = Network::new(build_setup(cfg).unwrap(), &mut sink);
    net.run_until(cfg.duration);
    net.nodes
        .iter()
        .map(|n| n.alarm.faulty.members().clone())
        .collect()
}

#[test]
fn piggybacked_list_reaches_every_honest_node() {
    let mut cfg = black_hole_config(2);
    cfg.duration = SimTime::from_secs(60);
    let lists = faulty_lists(&cfg);
    for (i, l) in lists.iter().enumerate() {
        if i != 4 {
            assert_eq!(*l, ids(&[5]), "node {}", i + 1);
        }
    }
}

#[test]
fn neighbourhood_list_stays_local() {
    let mut cfg = black_hole_config(2);
    cfg.duration = SimTime::from_secs(60);
    cfg.propagate = Propagation::Neighborhood;
    let lists = faulty_lists(&cfg);
    let holders: BTreeSet<u32> = (1..=10)
        .filter(|&i| lists[i as usize - 1].contains(&nid(5)))
        .collect();
    assert_eq!(
        holders,
        BTreeSet::from([2, 3, 6, 8]),
        "only neighbours of node 5 keep it"
    );
}

#[test]
fn two_colluders_cannot_frame_a_neighbour() {
    let (m, trace) = run_traced(&bad_mouth_config(1)).unwrap();
    let forged = trace
        .iter()
        .filter(|r| {
            r.kind == RecordKind::Alarm && r.outcome == Outcome::Delivered && matches!(r.src, 5 | 9)
        })
        .count();
    assert!(forged > 0, "the colluders did gossip accusations");
    assert!(
        commits(&trace).keys().all(|&(_, s)| s != 2),
        "node 2 was committed somewhere"
    );
    assert!(!m.convicted.contains(&nid(2)));
}
