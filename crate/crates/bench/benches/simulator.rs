use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use grayhole_core::alarm::alarm_payload;
use grayhole_core::id::nid;
use grayhole_core::rng::RngStreams;
use grayhole_core::routing::{RouteEntry, RouteTable};
use grayhole_core::{
    compute_metrics, run_scenario, run_traced, AlarmAggregate, KeyedDigestScheme, ScenarioConfig,
    SignatureScheme, SimTime,
};

fn short(malicious: usize) -> ScenarioConfig {
    ScenarioConfig {
        seed: 1,
        duration: SimTime::from_secs(60),
        malicious_count: malicious,
        ..ScenarioConfig::default()
    }
}

fn scenarios(c: &mut Criterion) {
    let mut g = c.benchmark_group("scenario_60s");
    g.sample_size(10);
    for mal in [0usize, 10] {
        let cfg = short(mal);
        g.bench_function(format!("malicious_{mal}"), |b| {
            b.iter(|| run_scenario(black_box(&cfg)).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let (_, trace) = run_traced(&short(10)).unwrap();
    c.bench_function("compute_metrics", |b| {
        b.iter(|| compute_metrics(black_box(&trace)).unwrap())
    });
}

fn route_table(c: &mut Criterion) {
    c.bench_function("route_offer_1000", |b| {
        b.iter(|| {
            let mut t = RouteTable::new(nid(1));
            for i in 0..1000u32 {
                let e = RouteEntry {
                    destination: nid(2 + i % 49),
                    next_hop: nid(2 + (i * 7) % 49),
                    hop_count: (1 + i % 9) as u8,
                    dest_seq: i / 3,
                    expires_at: SimTime::from_secs(u64::from(i)),
                    valid: true,
                };
                t.offer(e, SimTime::from_secs(u64::from(i / 2)));
            }
            t
        })
    });
}

fn alarms(c: &mut Criterion) {
    let scheme = KeyedDigestScheme::new(50, 3, &RngStreams::new(1));
    let msg = alarm_payload(nid(9), 4);
    let mut agg = AlarmAggregate::new(nid(9), 4);
    for s in [1, 2, 3, 4, 5] {
        agg.add(nid(s), scheme.sign(nid(s), &msg), &scheme);
    }
    c.bench_function("verify_complete_5_signers", |b| {
        b.iter(|| black_box(&agg).verify_complete(&scheme))
    });
}

criterion_group!(benches, scenarios, metrics, route_table, alarms);
criterion_main!(benches);
