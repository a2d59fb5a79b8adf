//! Scenario configuration: defaults, flat `key = value` files, validation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::detection::cadence::{how_often_to_detect, CadenceInput};
use crate::id::NodeId;
use crate::mobility::{Position, SpeedModel};
use crate::network::Propagation;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration: SimTime,
    pub node_count: usize,
    pub area_width: f64,
    pub area_height: f64,
    pub range: f64,
    pub max_speed: f64,
    pub pause: SimTime,
    pub speed_model: SpeedModel,
    pub flows: usize,
    pub packet_rate: f64,
    pub payload: u32,
    pub malicious_count: usize,
    /// Adversaries are drawn from this many nodes that never carry flows.
    pub malicious_cap: usize,
    pub detection_enabled: bool,
    pub k: usize,
    pub base_loss_prob: f64,
    /// `None` means unbounded.
    pub buffer_capacity: Option<usize>,
    pub per_hop_latency: SimTime,
    pub route_lifetime: SimTime,
    pub discovery_timeout: SimTime,
    pub pending_capacity: usize,
    pub rreq_retries: u32,
    pub p_gb: f64,
    pub p_bg: f64,
    pub phase_tick: SimTime,
    pub min_rate: f64,
    pub max_rate: f64,
    pub victims: Option<BTreeSet<NodeId>>,
    pub collude: bool,
    pub bad_mouth: BTreeSet<NodeId>,
    pub sync_evasion: bool,
    /// Fixed adversary ids; overrides the random draw.
    pub grayhole_ids: Option<Vec<NodeId>>,
    /// Explicit detection period; derived from the drop tolerance when unset.
    pub detection_period: Option<SimTime>,
    pub max_drop_fraction: f64,
    pub drop_window: SimTime,
    pub min_period: SimTime,
    pub max_period: SimTime,
    pub threshold_interval: SimTime,
    pub churn_reference: f64,
    pub clear_validity: SimTime,
    pub probe_gap: SimTime,
    pub coop_window: SimTime,
    pub propagate: Propagation,
    /// Fixed node positions; disables mobility.
    pub positions: Option<Vec<Position>>,
    /// Fixed (src, dst) flows; overrides the random draw.
    pub flow_pairs: Option<Vec<(NodeId, NodeId)>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            duration: SimTime::from_secs(1500),
            node_count: 50,
            area_width: 2000.0,
            area_height: 600.0,
            range: 200.0,
            max_speed: 20.0,
            pause: SimTime::ZERO,
            speed_model: SpeedModel::SteadyState,
            flows: 20,
            packet_rate: 2.0,
            payload: 512,
            malicious_count: 0,
            malicious_cap: 10,
            detection_enabled: true,
            k: 3,
            base_loss_prob: 0.01,
            buffer_capacity: Some(50),
            per_hop_latency: SimTime::from_millis(2),
            route_lifetime: SimTime::from_secs(10),
            discovery_timeout: SimTime::from_secs(1),
            pending_capacity: 64,
            rreq_retries: 2,
            p_gb: 0.2,
            p_bg: 0.2,
            phase_tick: SimTime::from_secs(5),
            min_rate: 0.2,
            max_rate: 1.0,
            victims: None,
            collude: false,
            bad_mouth: BTreeSet::new(),
            sync_evasion: false,
            grayhole_ids: None,
            detection_period: None,
            max_drop_fraction: 0.1,
            drop_window: SimTime::from_secs(100),
            min_period: SimTime::from_secs(2),
            max_period: SimTime::from_secs(60),
            threshold_interval: SimTime::from_secs(10),
            churn_reference: 0.5,
            clear_validity: SimTime::from_secs(30),
            probe_gap: SimTime::from_millis(50),
            coop_window: SimTime::from_millis(600),
            propagate: Propagation::Piggyback,
            positions: None,
            flow_pairs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// 1-based source line, when the issue came from a file.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} issue(s)):", self.issues.len())?;
        for i in &self.issues {
            writeln!(f, "  - {i}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    fn single(message: impl Into<String>) -> Self {
        ConfigError {
            issues: vec![ConfigIssue {
                line: None,
                message: message.into(),
            }],
        }
    }
}

fn parse<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn parse_secs(v: &str) -> Result<SimTime, String> {
    let s: f64 = parse(v)?;
    if !s.is_finite() || s < 0.0 {
        return Err(format!("expected non-negative seconds, got {v:?}"));
    }
    Ok(SimTime::from_secs_f64(s))
}

fn parse_ids(v: &str) -> Result<Vec<NodeId>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<NodeId>()
                .map_err(|_| format!("bad node id {s:?}"))
        })
        .collect()
}

fn parse_positions(v: &str) -> Result<Vec<Position>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let (x, y) = p
                .split_once(':')
                .ok_or_else(|| format!("position {p:?} is not x:y"))?;
            Ok(Position::new(parse(x.trim())?, parse(y.trim())?))
        })
        .collect()
}

fn parse_pairs(v: &str) -> Result<Vec<(NodeId, NodeId)>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let (a, b) = p
                .split_once('>')
                .ok_or_else(|| format!("flow {p:?} is not src>dst"))?;
            let a = a
                .trim()
                .parse::<NodeId>()
                .map_err(|_| format!("bad node id {a:?}"))?;
            let b = b
                .trim()
                .parse::<NodeId>()
                .map_err(|_| format!("bad node id {b:?}"))?;
            Ok((a, b))
        })
        .collect()
}

fn join_ids<'a>(ids: impl IntoIterator<Item = &'a NodeId>) -> String {
    ids.into_iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn secs(t: SimTime) -> String {
    let s = t.to_string();
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

impl ScenarioConfig {
    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "seed" => self.seed = parse(v)?,
            "duration" => self.duration = parse_secs(v)?,
            "node_count" => self.node_count = parse(v)?,
            "area_width" => self.area_width = parse(v)?,
            "area_height" => self.area_height = parse(v)?,
            "range" => self.range = parse(v)?,
            "max_speed" => self.max_speed = parse(v)?,
            "pause" => self.pause = parse_secs(v)?,
            "speed_model" => {
                self.speed_model = match v {
                    "steady" => SpeedModel::SteadyState,
                    "naive" => SpeedModel::NaiveUniform,
                    _ => return Err(format!("speed_model must be steady or naive, got {v:?}")),
                }
            }
            "flows" => self.flows = parse(v)?,
            "packet_rate" => self.packet_rate = parse(v)?,
            "payload" => self.payload = parse(v)?,
            "malicious_count" | "grayhole.count" => self.malicious_count = parse(v)?,
            "malicious_cap" => self.malicious_cap = parse(v)?,
            "detection_enabled" => self.detection_enabled = parse_bool(v)?,
            "k" => self.k = parse(v)?,
            "base_loss_prob" => self.base_loss_prob = parse(v)?,
            "buffer_capacity" => {
                self.buffer_capacity = match v {
                    "inf" | "unbounded" => None,
                    _ => Some(parse(v)?),
                }
            }
            "per_hop_latency" => self.per_hop_latency = parse_secs(v)?,
            "route_lifetime" => self.route_lifetime = parse_secs(v)?,
            "discovery_timeout" => self.discovery_timeout = parse_secs(v)?,
            "pending_capacity" => self.pending_capacity = parse(v)?,
            "rreq_retries" => self.rreq_retries = parse(v)?,
            "grayhole.p_gb" => self.p_gb = parse(v)?,
            "grayhole.p_bg" => self.p_bg = parse(v)?,
            "grayhole.phase_tick" => self.phase_tick = parse_secs(v)?,
            "grayhole.min_rate" => self.min_rate = parse(v)?,
            "grayhole.max_rate" => self.max_rate = parse(v)?,
            "grayhole.victims" => {
                let ids = parse_ids(v)?;
                self.victims = (!ids.is_empty()).then(|| ids.into_iter().collect());
            }
            "grayhole.collude" => self.collude = parse_bool(v)?,
            "grayhole.bad_mouth" => self.bad_mouth = parse_ids(v)?.into_iter().collect(),
            "grayhole.sync_evasion" => self.sync_evasion = parse_bool(v)?,
            "grayhole.ids" => {
                let ids = parse_ids(v)?;
                self.grayhole_ids = (!ids.is_empty()).then_some(ids);
            }
            "detection.period" => {
                self.detection_period = match v {
                    "auto" => None,
                    _ => Some(parse_secs(v)?),
                }
            }
            "detection.max_drop" => self.max_drop_fraction = parse(v)?,
            "detection.drop_window" => self.drop_window = parse_secs(v)?,
            "detection.min_period" => self.min_period = parse_secs(v)?,
            "detection.max_period" => self.max_period = parse_secs(v)?,
            "detection.threshold" => self.threshold_interval = parse_secs(v)?,
            "detection.churn_reference" => self.churn_reference = parse(v)?,
            "detection.clear_validity" => self.clear_validity = parse_secs(v)?,
            "detection.probe_gap" => self.probe_gap = parse_secs(v)?,
            "detection.coop_window" => self.coop_window = parse_secs(v)?,
            "propagate" => {
                self.propagate = match v {
                    "piggyback" => Propagation::Piggyback,
                    "neighborhood" => Propagation::Neighborhood,
                    _ => {
                        return Err(format!(
                            "propagate must be piggyback or neighborhood, got {v:?}"
                        ))
                    }
                }
            }
            "positions" => self.positions = Some(parse_positions(v)?),
            "flow_pairs" => self.flow_pairs = Some(parse_pairs(v)?),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in a stable order. Feeding these
    /// back through [`ScenarioConfig::set`] reproduces the config.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = vec![
            ("seed", self.seed.to_string()),
            ("duration", secs(self.duration)),
            ("node_count", self.node_count.to_string()),
            ("area_width", self.area_width.to_string()),
            ("area_height", self.area_height.to_string()),
            ("range", self.range.to_string()),
            ("max_speed", self.max_speed.to_string()),
            ("pause", secs(self.pause)),
            (
                "speed_model",
                match self.speed_model {
                    SpeedModel::SteadyState => "steady",
                    SpeedModel::NaiveUniform => "naive",
                }
                .into(),
            ),
            ("flows", self.flows.to_string()),
            ("packet_rate", self.packet_rate.to_string()),
            ("payload", self.payload.to_string()),
            ("malicious_count", self.malicious_count.to_string()),
            ("malicious_cap", self.malicious_cap.to_string()),
            ("detection_enabled", self.detection_enabled.to_string()),
            ("k", self.k.to_string()),
            ("base_loss_prob", self.base_loss_prob.to_string()),
            (
                "buffer_capacity",
                self.buffer_capacity.map_or("inf".into(), |c| c.to_string()),
            ),
            ("per_hop_latency", secs(self.per_hop_latency)),
            ("route_lifetime", secs(self.route_lifetime)),
            ("discovery_timeout", secs(self.discovery_timeout)),
            ("pending_capacity", self.pending_capacity.to_string()),
            ("rreq_retries", self.rreq_retries.to_string()),
            ("grayhole.p_gb", self.p_gb.to_string()),
            ("grayhole.p_bg", self.p_bg.to_string()),
            ("grayhole.phase_tick", secs(self.phase_tick)),
            ("grayhole.min_rate", self.min_rate.to_string()),
            ("grayhole.max_rate", self.max_rate.to_string()),
            (
                "grayhole.victims",
                self.victims.as_ref().map_or(String::new(), join_ids),
            ),
            ("grayhole.collude", self.collude.to_string()),
            ("grayhole.bad_mouth", join_ids(&self.bad_mouth)),
            ("grayhole.sync_evasion", self.sync_evasion.to_string()),
            (
                "grayhole.ids",
                self.grayhole_ids.as_ref().map_or(String::new(), join_ids),
            ),
            (
                "detection.period",
                self.detection_period.map_or("auto".into(), secs),
            ),
            ("detection.max_drop", self.max_drop_fraction.to_string()),
            ("detection.drop_window", secs(self.drop_window)),
            ("detection.min_period", secs(self.min_period)),
            ("detection.max_period", secs(self.max_period)),
            ("detection.threshold", secs(self.threshold_interval)),
            (
                "detection.churn_reference",
                self.churn_reference.to_string(),
            ),
            ("detection.clear_validity", secs(self.clear_validity)),
            ("detection.probe_gap", secs(self.probe_gap)),
            ("detection.coop_window", secs(self.coop_window)),
            (
                "propagate",
                match self.propagate {
                    Propagation::Piggyback => "piggyback",
                    Propagation::Neighborhood => "neighborhood",
                }
                .into(),
            ),
        ];
        if let Some(p) = &self.positions {
            let s = p
                .iter()
                .map(|p| format!("{}:{}", p.x, p.y))
                .collect::<Vec<_>>()
                .join(";");
            e.push(("positions", s));
        }
        if let Some(f) = &self.flow_pairs {
            let s = f
                .iter()
                .map(|(a, b)| format!("{a}>{b}"))
                .collect::<Vec<_>>()
                .join(";");
            e.push(("flow_pairs", s));
        }
        e
    }

    pub fn to_kv_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parses a flat `key = value` file on top of the defaults. Blank lines
    /// and `#` comments are ignored. All problems are reported together.
    pub fn parse_kv(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut issues = vec![];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                issues.push(ConfigIssue {
                    line: Some(i + 1),
                    message: format!("expected key = value, got {line:?}"),
                });
                continue;
            };
            if let Err(message) = cfg.set(k.trim(), v.trim()) {
                issues.push(ConfigIssue {
                    line: Some(i + 1),
                    message: format!("{}: {message}", k.trim()),
                });
            }
        }
        if !issues.is_empty() {
            return Err(ConfigError { issues });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field; returns all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = vec![];
        let mut check = |ok: bool, msg: String| {
            if !ok {
                bad.push(ConfigIssue {
                    line: None,
                    message: msg,
                });
            }
        };
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        check(
            self.node_count >= 2,
            format!("node_count must be >= 2, got {}", self.node_count),
        );
        check(self.duration > SimTime::ZERO, "duration must be > 0".into());
        check(
            self.area_width > 0.0 && self.area_height > 0.0,
            "area dimensions must be > 0".into(),
        );
        check(
            self.range > 0.0,
            format!("range must be > 0, got {}", self.range),
        );
        check(
            self.max_speed >= 0.0 && self.max_speed.is_finite(),
            format!("max_speed must be >= 0, got {}", self.max_speed),
        );
        check(
            self.packet_rate > 0.0 && self.packet_rate.is_finite(),
            format!("packet_rate must be > 0, got {}", self.packet_rate),
        );
        check(self.payload > 0, "payload must be > 0".into());
        check(self.k >= 1, "k must be >= 1".into());
        check(
            prob(self.base_loss_prob),
            format!(
                "base_loss_prob must be in [0,1], got {}",
                self.base_loss_prob
            ),
        );
        check(
            self.buffer_capacity != Some(0),
            "buffer_capacity must be > 0 or inf".into(),
        );
        check(
            self.pending_capacity > 0,
            "pending_capacity must be > 0".into(),
        );
        check(self.rreq_retries <= 8, "rreq_retries must be <= 8".into());
        for (name, p) in [("grayhole.p_gb", self.p_gb), ("grayhole.p_bg", self.p_bg)] {
            check(prob(p), format!("{name} must be in [0,1], got {p}"));
        }
        check(
            prob(self.min_rate) && prob(self.max_rate) && self.min_rate <= self.max_rate,
            format!(
                "need 0 <= grayhole.min_rate <= grayhole.max_rate <= 1, got {} and {}",
                self.min_rate, self.max_rate
            ),
        );
        check(
            self.phase_tick > SimTime::ZERO,
            "grayhole.phase_tick must be > 0".into(),
        );
        let cap = self.effective_cap();
        match &self.grayhole_ids {
            Some(ids) => {
                let set: BTreeSet<_> = ids.iter().collect();
                check(set.len() == ids.len(), "grayhole.ids has duplicates".into());
                check(
                    ids.iter().all(|n| n.index() < self.node_count),
                    "grayhole.ids names a node beyond node_count".into(),
                );
            }
            None => check(
                self.malicious_count <= cap,
                format!(
                    "malicious_count {} exceeds the cap of {cap}",
                    self.malicious_count
                ),
            ),
        }
        for n in self.bad_mouth.iter().chain(self.victims.iter().flatten()) {
            check(
                n.index() < self.node_count,
                format!("node {n} is beyond node_count"),
            );
        }
        if let Some(p) = &self.positions {
            check(
                p.len() == self.node_count,
                format!("{} positions given for {} nodes", p.len(), self.node_count),
            );
            check(
                p.iter().all(|q| {
                    (0.0..=self.area_width).contains(&q.x)
                        && (0.0..=self.area_height).contains(&q.y)
                }),
                "a position lies outside the area".into(),
            );
        }
        match &self.flow_pairs {
            Some(f) => check(
                f.iter().all(|(a, b)| {
                    a != b && a.index() < self.node_count && b.index() < self.node_count
                }),
                "flow_pairs need distinct endpoints within node_count".into(),
            ),
            None => check(
                self.flows == 0 || self.node_count - cap >= 2,
                "too few flow-eligible nodes for the requested flows".into(),
            ),
        }
        if self.detection_enabled {
            if let Err(e) = self.detection_period() {
                check(false, e);
            }
            check(
                self.coop_window > self.probe_gap.times(3),
                "detection.coop_window must exceed 3 probe gaps".into(),
            );
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues: bad })
        }
    }

    /// Nodes set aside as potential adversaries.
    pub fn effective_cap(&self) -> usize {
        self.malicious_cap.min(self.node_count.saturating_sub(2))
    }

    pub fn detection_period(&self) -> Result<SimTime, String> {
        if let Some(p) = self.detection_period {
            return if p > SimTime::ZERO {
                Ok(p)
            } else {
                Err("detection.period must be > 0".into())
            };
        }
        how_often_to_detect(&CadenceInput {
            max_drop_fraction: self.max_drop_fraction,
            flow_rate: self.packet_rate,
            window: self.drop_window,
            min_period: self.min_period,
            max_period: self.max_period,
        })
        .map_err(|e| format!("detection cadence: {e}"))
    }

    /// Applies `key=value` overrides, as given on a command line.
    pub fn apply_overrides<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), ConfigError> {
        let mut issues = vec![];
        for p in pairs {
            let res = match p.split_once('=') {
                Some((k, v)) => self
                    .set(k.trim(), v.trim())
                    .map_err(|m| format!("{}: {m}", k.trim())),
                None => Err(format!("override {p:?} is not key=value")),
            };
            if let Err(message) = res {
                issues.push(ConfigIssue {
                    line: None,
                    message,
                });
            }
        }
        if issues.is_empty() {
            self.validate()
        } else {
            Err(ConfigError { issues })
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> ConfigError {
        ConfigError::single(msg)
    }
}
