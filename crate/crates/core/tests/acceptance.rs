//! Acceptance suite. Runs every primary criterion at its stated tolerance,
//! prints one PASS/FAIL line each, and exits non-zero if any fails.
//!
//! `cargo test -p grayhole-core --test acceptance`

mod common;

use std::cell::OnceCell;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use grayhole_core::rng::{RngStreams, StreamId};
use grayhole_core::scenario::run_with_sink;
use grayhole_core::sweep::{run_sweep, spearman, summarize, Axis, PointSummary};
use grayhole_core::trace::{parse_trace, LineWriter};
use grayhole_core::{
    compute_metrics, run_scenario, run_traced, GrayHoleState, Phase, ScenarioConfig, SimTime,
};

type Verdict = Result<String, String>;
type Grid = Vec<(usize, Vec<PointSummary>)>;

fn defaults(malicious: usize) -> ScenarioConfig {
    ScenarioConfig {
        malicious_count: malicious,
        seed: 1,
        ..ScenarioConfig::default()
    }
}

fn soundness() -> Verdict {
    let mut slowest = Duration::ZERO;
    for seed in 1..=10u64 {
        let cfg = ScenarioConfig {
            seed,
            base_loss_prob: 0.0,
            buffer_capacity: None,
            ..defaults(0)
        };
        let start = Instant::now();
        let m = run_scenario(&cfg).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        if m.fpr != 0.0 {
            return Err(format!(
                "seed {seed}: fpr {} convicted {:?}",
                m.fpr, m.convicted
            ));
        }
    }
    if slowest >= Duration::from_secs(120) {
        return Err(format!("slowest run took {slowest:?}"));
    }
    Ok(format!(
        "fpr 0 in 10/10 runs, slowest {:.1} s",
        slowest.as_secs_f64()
    ))
}

fn black_hole() -> Verdict {
    let mut times = Vec::new();
    for seed in 1..=10u64 {
        let mut cfg = black_hole_config(seed);
        let period = cfg.detection_period()?;
        cfg.duration = period.times(2);
        let (m, trace) = run_traced(&cfg).map_err(|e| e.to_string())?;
        if !m.convicted.contains(&grayhole_core::id::nid(5)) {
            return Err(format!(
                "seed {seed}: not convicted within {}",
                cfg.duration
            ));
        }
        let first = commits(&trace)
            .iter()
            .filter(|(&(c, s), _)| s == 5 && c != 5)
            .map(|(_, &t)| t)
            .min()
            .unwrap();
        times.push(first.as_secs_f64());
    }
    let worst = times.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "convicted in 10/10 seeds, latest first commit at {worst:.2} s"
    ))
}

/// Mobility sweep at 5 and 10 gray holes, 10 repeats per point.
fn mobility_grid() -> Result<Grid, String> {
    let mut out = Vec::new();
    for mal in [5usize, 10] {
        let rows = run_sweep(
            &defaults(mal),
            Axis::Mobility,
            &[0.0, 5.0, 10.0, 20.0],
            10,
            false,
        );
        if let Some(e) = rows.iter().find_map(|r| r.result.as_ref().err()) {
            return Err(e.clone());
        }
        out.push((mal, summarize(&rows)));
    }
    Ok(out)
}

fn means(points: &[PointSummary], f: impl Fn(&PointSummary) -> f64) -> String {
    points
        .iter()
        .map(|p| format!("{:.0}:{:.3}", p.axis_value, f(p)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fpr_vs_mobility(grid: &Grid) -> Verdict {
    let mut detail = Vec::new();
    let mut bad = Vec::new();
    for (mal, pts) in grid {
        let speeds: Vec<f64> = pts.iter().map(|p| p.axis_value).collect();
        let fpr: Vec<f64> = pts.iter().map(|p| p.fpr.mean).collect();
        let rho = spearman(&speeds, &fpr);
        detail.push(format!(
            "mal {mal}: {} rho {rho:.2}",
            means(pts, |p| p.fpr.mean)
        ));
        if fpr.iter().any(|&f| f > 0.10) {
            bad.push(format!("mal {mal}: mean fpr above 0.10"));
        }
        if rho < 0.0 {
            bad.push(format!("mal {mal}: rho {rho:.2} < 0"));
        }
    }
    verdict(bad, detail)
}

fn miss_vs_mobility(grid: &Grid) -> Verdict {
    let mut detail = Vec::new();
    let mut bad = Vec::new();
    for (mal, pts) in grid {
        detail.push(format!("mal {mal}: {}", means(pts, |p| p.miss_rate.mean)));
        if pts.iter().any(|p| p.miss_rate.mean > 0.15) {
            bad.push(format!("mal {mal}: mean miss above 0.15"));
        }
        let (first, last) = (pts.first().unwrap(), pts.last().unwrap());
        if first.miss_rate.mean < last.miss_rate.mean {
            bad.push(format!("mal {mal}: static miss below miss at 20 m/s"));
        }
    }
    verdict(bad, detail)
}

fn delivery() -> Verdict {
    let rows = run_sweep(&defaults(10), Axis::Malicious, &[10.0], 10, true);
    let pts = summarize(&rows);
    let p = pts.first().ok_or("no runs")?;
    let (on, off) = (p.pdr.mean, p.pdr_baseline.mean);
    let detail = format!("pdr on {on:.3}, off {off:.3}");
    let mut bad = Vec::new();
    if on < 0.90 {
        bad.push(format!("pdr {on:.3} < 0.90"));
    }
    if on - off < 0.05 {
        bad.push(format!("gain {:.1} points < 5", 100.0 * (on - off)));
    }
    verdict(bad, vec![detail])
}

fn overhead_vs_volume() -> Verdict {
    let volumes = [30_000.0, 60_000.0, 120_000.0, 240_000.0];
    let rows = run_sweep(&defaults(10), Axis::Volume, &volumes, 5, false);
    let pts = summarize(&rows);
    let ovh: Vec<f64> = pts.iter().map(|p| p.overhead_pct.mean).collect();
    let detail = means(&pts, |p| p.overhead_pct.mean);
    if ovh.windows(2).all(|w| w[1] < w[0]) {
        Ok(detail)
    } else {
        Err(format!("not strictly decreasing: {detail}"))
    }
}

fn bad_mouthing() -> Verdict {
    let mut forged = 0usize;
    for seed in 1..=10u64 {
        let cfg = bad_mouth_config(seed);
        let (_, trace) = run_traced(&cfg).map_err(|e| e.to_string())?;
        forged += trace
            .iter()
            .filter(|r| r.kind == grayhole_core::RecordKind::Alarm && matches!(r.src, 5 | 9))
            .count();
        if let Some((c, _)) = commits(&trace).keys().find(|k| k.1 == 2) {
            return Err(format!("seed {seed}: node {c} listed the target"));
        }
    }
    if forged == 0 {
        return Err("the colluders never gossiped".into());
    }
    Ok(format!(
        "target never listed in 10/10 seeds, {forged} forged alarm transmissions"
    ))
}

fn markov_occupancy() -> Result<String, String> {
    let d = ScenarioConfig::default();
    let mut detail = Vec::new();
    for (i, (p_gb, p_bg)) in [(d.p_gb, d.p_bg), (0.1, 0.3), (0.3, 0.2)]
        .into_iter()
        .enumerate()
    {
        let mut rng = RngStreams::new(i as u64 + 1).stream(StreamId::Adversary);
        let mut gh = GrayHoleState::new(p_gb, p_bg, SimTime::from_secs(1), 0.5, 1.0, &mut rng);
        let ticks = 100_000;
        let mut bad = 0u32;
        for _ in 0..ticks {
            gh.phase_transition(&mut rng);
            bad += u32::from(gh.phase == Phase::Bad);
        }
        let observed = f64::from(bad) / f64::from(ticks);
        let analytic = p_gb / (p_gb + p_bg);
        if (observed - analytic).abs() > 0.01 {
            return Err(format!(
                "p_gb {p_gb} p_bg {p_bg}: observed {observed:.4}, analytic {analytic:.4}"
            ));
        }
        detail.push(format!("{observed:.4}/{analytic:.4}"));
    }
    Ok(detail.join(" "))
}

fn oracles() -> Verdict {
    for seed in 0..20u64 {
        bfs_oracle(seed)?;
    }
    let markov = markov_occupancy()?;
    let t = hand_trace();
    if t.len() != 20 {
        return Err(format!("hand trace has {} records", t.len()));
    }
    check_hand_metrics(&compute_metrics(&t).map_err(|e| e.to_string())?)?;
    Ok(format!(
        "bfs 20/20, bad-phase occupancy {markov}, hand trace exact"
    ))
}

fn determinism() -> Verdict {
    let cfg = ScenarioConfig {
        seed: 7,
        duration: SimTime::from_secs(300),
        ..defaults(10)
    };
    let run = || {
        let mut w = LineWriter::new(Vec::new());
        let m = run_with_sink(&cfg, &mut w).map_err(|e| e.to_string())?;
        Ok::<_, String>((m, w.finish().map_err(|e| e.to_string())?))
    };
    let (m1, t1) = run()?;
    let (m2, t2) = run()?;
    if t1 != t2 || m1 != m2 {
        return Err("two runs of the same seed differ".into());
    }
    let text = String::from_utf8(t1).map_err(|e| e.to_string())?;
    let parsed = parse_trace(&text).map_err(|e| e.to_string())?;
    if compute_metrics(&parsed).map_err(|e| e.to_string())? != m1 {
        return Err("metrics recomputed from the trace differ".into());
    }
    Ok(format!("{} identical trace bytes", text.len()))
}

fn verdict(bad: Vec<String>, detail: Vec<String>) -> Verdict {
    let detail = detail.join("; ");
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} ({detail})", bad.join(", ")))
    }
}

fn main() -> ExitCode {
    // Both mobility criteria read one shared grid, built on first use.
    let grid = OnceCell::new();
    let from_grid = |f: fn(&Grid) -> Verdict| match grid.get_or_init(mobility_grid) {
        Ok(g) => f(g),
        Err(e) => Err(e.clone()),
    };
    let fpr = || from_grid(fpr_vs_mobility);
    let miss = || from_grid(miss_vs_mobility);
    let criteria: [(&str, &dyn Fn() -> Verdict); 9] = [
        ("soundness", &soundness),
        ("black-hole completeness", &black_hole),
        ("false positives vs mobility", &fpr),
        ("miss rate vs mobility", &miss),
        ("delivery under 20% gray holes", &delivery),
        ("overhead vs data volume", &overhead_vs_volume),
        ("bad-mouthing resistance", &bad_mouthing),
        ("oracle equivalences", &oracles),
        ("determinism", &determinism),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        match v {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1} s]");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
