//! Parameter sweeps with repeats, a detection-off baseline, and CSV output.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::id::NodeId;
use crate::metrics::RunMetrics;
use crate::scenario::run_scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Maximum node speed, m/s.
    Mobility,
    /// Number of gray holes.
    Malicious,
    /// Total CBR packets offered over the run.
    Volume,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Mobility => "mobility",
            Axis::Malicious => "malicious",
            Axis::Volume => "volume",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mobility" => Ok(Axis::Mobility),
            "malicious" => Ok(Axis::Malicious),
            "volume" => Ok(Axis::Volume),
            _ => Err(format!(
                "unknown axis {s:?} (expected mobility, malicious or volume)"
            )),
        }
    }
}

impl Axis {
    /// The config at one sweep point.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut c = base.clone();
        match self {
            Axis::Mobility => c.max_speed = value,
            Axis::Malicious => c.malicious_count = value.round().max(0.0) as usize,
            Axis::Volume => {
                let flows = c.flow_pairs.as_ref().map_or(c.flows, Vec::len).max(1);
                c.packet_rate = value / (flows as f64 * c.duration.as_secs_f64());
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub repeat: u32,
    pub seed: u64,
    /// Detection on, or the run error.
    pub result: Result<RunMetrics, String>,
    /// Detection off under the same seed, when requested.
    pub baseline: Option<Result<RunMetrics, String>>,
}

/// Repeat `r` uses seed `base + r` at every point, so points differ only
/// in the swept parameter. Rows come back sorted by (value, repeat).
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: Axis,
    values: &[f64],
    repeats: u32,
    baseline: bool,
) -> Vec<SweepRow> {
    let jobs: Vec<(f64, u32)> = values
        .iter()
        .flat_map(|&v| (0..repeats).map(move |r| (v, r)))
        .collect();
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(v, r)| {
            let mut cfg = axis.apply(base, v);
            cfg.seed = base.seed + u64::from(r);
            let on = run_scenario(&cfg).map_err(|e| e.to_string());
            let off = baseline.then(|| {
                let mut c = cfg.clone();
                c.detection_enabled = false;
                run_scenario(&c).map_err(|e| e.to_string())
            });
            SweepRow {
                axis_value: v,
                repeat: r,
                seed: cfg.seed,
                result: on,
                baseline: off,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.axis_value
            .total_cmp(&b.axis_value)
            .then(a.repeat.cmp(&b.repeat))
    });
    rows
}

pub const CSV_HEADER: &str =
    "axis_value,repeat,seed,fpr,miss_rate,pdr,overhead_pct,pdr_baseline,overhead_baseline_pct,convicted,truth";

pub const METRIC_DEFINITIONS: &str = "# fpr=|convicted\\truth|/honest; miss_rate=|truth\\convicted|/|truth| (0 if no truth); \
pdr=cbr_received/cbr_originated; overhead_pct=100*control_transmissions/cbr_hop_transmissions; baseline=detection off, same seed";

fn ids(s: &std::collections::BTreeSet<NodeId>) -> String {
    s.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{METRIC_DEFINITIONS}\n{CSV_HEADER}\n");
    for r in rows {
        let (pdr_b, ovh_b) = match &r.baseline {
            Some(Ok(b)) => (num(b.pdr), num(b.overhead_pct)),
            Some(Err(_)) => ("failed".into(), "failed".into()),
            None => (String::new(), String::new()),
        };
        let body = match &r.result {
            Ok(m) => format!(
                "{},{},{},{},{pdr_b},{ovh_b},{},{}",
                num(m.fpr),
                num(m.miss_rate),
                num(m.pdr),
                num(m.overhead_pct),
                ids(&m.convicted),
                ids(&m.ground_truth_malicious)
            ),
            Err(e) => format!(
                ",,,,{pdr_b},{ovh_b},failed: {},",
                e.replace([',', '\n'], " ")
            ),
        };
        out.push_str(&format!(
            "{},{},{},{body}\n",
            r.axis_value, r.repeat, r.seed
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        if xs.is_empty() {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub axis_value: f64,
    pub runs: usize,
    pub failures: usize,
    pub fpr: Stat,
    pub miss_rate: Stat,
    pub pdr: Stat,
    pub overhead_pct: Stat,
    pub pdr_baseline: Stat,
    pub overhead_baseline_pct: Stat,
}

impl PointSummary {
    pub fn overhead_delta(&self) -> f64 {
        self.overhead_pct.mean - self.overhead_baseline_pct.mean
    }
}

/// Mean and standard deviation per sweep value, over successful runs.
pub fn summarize(rows: &[SweepRow]) -> Vec<PointSummary> {
    let mut out: Vec<PointSummary> = vec![];
    let mut i = 0;
    while i < rows.len() {
        let v = rows[i].axis_value;
        let group: Vec<&SweepRow> = rows[i..].iter().take_while(|r| r.axis_value == v).collect();
        i += group.len();
        let ok: Vec<&RunMetrics> = group
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .collect();
        let base: Vec<&RunMetrics> = group
            .iter()
            .filter_map(|r| r.baseline.as_ref().and_then(|b| b.as_ref().ok()))
            .collect();
        let col = |ms: &[&RunMetrics], f: fn(&RunMetrics) -> f64| {
            Stat::of(&ms.iter().map(|m| f(m)).collect::<Vec<_>>())
        };
        out.push(PointSummary {
            axis_value: v,
            runs: group.len(),
            failures: group.len() - ok.len(),
            fpr: col(&ok, |m| m.fpr),
            miss_rate: col(&ok, |m| m.miss_rate),
            pdr: col(&ok, |m| m.pdr),
            overhead_pct: col(&ok, |m| m.overhead_pct),
            pdr_baseline: col(&base, |m| m.pdr),
            overhead_baseline_pct: col(&base, |m| m.overhead_pct),
        });
    }
    out
}

pub const SUMMARY_HEADER: &str = "axis_value,runs,failures,fpr_mean,fpr_std,miss_rate_mean,miss_rate_std,pdr_mean,pdr_std,\
overhead_pct_mean,overhead_pct_std,pdr_baseline_mean,pdr_baseline_std,overhead_baseline_pct_mean,overhead_baseline_pct_std,overhead_delta_pct";

pub fn summary_csv(points: &[PointSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for p in points {
        let stats = [
            p.fpr,
            p.miss_rate,
            p.pdr,
            p.overhead_pct,
            p.pdr_baseline,
            p.overhead_baseline_pct,
        ]
        .iter()
        .map(|s| format!("{},{}", num(s.mean), num(s.std)))
        .collect::<Vec<_>>()
        .join(",");
        out.push_str(&format!(
            "{},{},{},{stats},{}\n",
            p.axis_value,
            p.runs,
            p.failures,
            num(p.overhead_delta())
        ));
    }
    out
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. A constant
/// series has no trend and yields 0.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "series lengths differ");
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
