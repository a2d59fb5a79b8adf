//! Steady-state random waypoint mobility.
//!
//! Leg speeds are drawn with density proportional to `v` on `(0, max_speed]`,
//! which makes the time-stationary speed distribution uniform on the same
//! interval. Initial states are drawn from the stationary regime (length-biased
//! leg, uniform position along it), so there is no warm-up transient and no
//! long-run speed decay.

use rand::Rng;

use crate::rng::{RngStreams, SimRng, StreamId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    fn sample(&self, rng: &mut SimRng) -> Position {
        Position {
            x: rng.random::<f64>() * self.width,
            y: rng.random::<f64>() * self.height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub position: Position,
    pub waypoint: Position,
    /// m/s; zero for a static node.
    pub speed: f64,
    /// seconds left to wait at the current waypoint
    pub pause_remaining: f64,
}

/// How a new leg's speed is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedModel {
    /// Density `2v / max²`; stationary speed is uniform on `(0, max]`.
    SteadyState,
    /// Uniform on `(0, max]` per leg. Its stationary mean decays to zero.
    NaiveUniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub area: Area,
    pub max_speed: f64,
    pub pause: f64,
    pub speed_model: SpeedModel,
}

impl MobilityParams {
    fn leg_speed(&self, rng: &mut SimRng) -> f64 {
        // 1 - U lies in (0, 1], so speeds are strictly positive.
        let u = 1.0 - rng.random::<f64>();
        match self.speed_model {
            SpeedModel::SteadyState => self.max_speed * u.sqrt(),
            SpeedModel::NaiveUniform => self.max_speed * u,
        }
    }
}

/// Moves `state` forward by `dt` seconds, sampling new legs on arrival.
pub fn advance_mobility(
    state: &mut MobilityState,
    mut dt: f64,
    params: &MobilityParams,
    rng: &mut SimRng,
) {
    if params.max_speed <= 0.0 {
        return;
    }
    while dt > 0.0 {
        if state.pause_remaining > 0.0 {
            let wait = state.pause_remaining.min(dt);
            state.pause_remaining -= wait;
            dt -= wait;
            continue;
        }
        let remaining = state.position.distance(&state.waypoint);
        let to_arrive = remaining / state.speed;
        if dt < to_arrive {
            let f = state.speed * dt / remaining;
            state.position.x += (state.waypoint.x - state.position.x) * f;
            state.position.y += (state.waypoint.y - state.position.y) * f;
            return;
        }
        dt -= to_arrive;
        state.position = state.waypoint;
        state.pause_remaining = params.pause;
        state.waypoint = params.area.sample(rng);
        state.speed = params.leg_speed(rng);
    }
}

/// Draws a state from the stationary regime of the model.
pub fn stationary_state(params: &MobilityParams, rng: &mut SimRng) -> MobilityState {
    let diag = params.area.diagonal();
    // Length-biased leg: accept a uniform pair with probability |leg| / diagonal.
    let (from, to) = loop {
        let a = params.area.sample(rng);
        let b = params.area.sample(rng);
        if rng.random::<f64>() * diag < a.distance(&b) {
            break (a, b);
        }
    };
    let along = rng.random::<f64>();
    let position = Position {
        x: from.x + (to.x - from.x) * along,
        y: from.y + (to.y - from.y) * along,
    };
    let speed = if params.max_speed > 0.0 {
        match params.speed_model {
            SpeedModel::SteadyState => params.max_speed * (1.0 - rng.random::<f64>()),
            SpeedModel::NaiveUniform => params.leg_speed(rng),
        }
    } else {
        0.0
    };
    MobilityState {
        position,
        waypoint: to,
        speed,
        pause_remaining: 0.0,
    }
}

struct Mover {
    state: MobilityState,
    at: SimTime,
    rng: SimRng,
}

/// Positions of every node, advanced lazily to the queried instant.
///
/// Each node owns its own random stream so that trajectories depend only on
/// the seed and the node id.
pub struct Mobility {
    params: MobilityParams,
    movers: Vec<Mover>,
}

impl Mobility {
    pub fn random(params: MobilityParams, count: usize, streams: &RngStreams) -> Self {
        let movers = (0..count)
            .map(|i| {
                let mut rng = streams.substream(StreamId::Mobility, i as u64);
                let state = stationary_state(&params, &mut rng);
                Mover {
                    state,
                    at: SimTime::ZERO,
                    rng,
                }
            })
            .collect();
        Mobility { params, movers }
    }

    /// Pinned nodes that never move.
    pub fn fixed(area: Area, positions: &[Position]) -> Self {
        let params = MobilityParams {
            area,
            max_speed: 0.0,
            pause: 0.0,
            speed_model: SpeedModel::SteadyState,
        };
        let movers = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| Mover {
                state: MobilityState {
                    position: p,
                    waypoint: p,
                    speed: 0.0,
                    pause_remaining: 0.0,
                },
                at: SimTime::ZERO,
                rng: RngStreams::new(0).substream(StreamId::Mobility, i as u64),
            })
            .collect();
        Mobility { params, movers }
    }

    pub fn len(&self) -> usize {
        self.movers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.movers.is_empty()
    }

    pub fn params(&self) -> &MobilityParams {
        &self.params
    }

    /// State of node slot `i` at `t`. `t` must not precede an earlier query.
    pub fn state_at(&mut self, i: usize, t: SimTime) -> MobilityState {
        let m = &mut self.movers[i];
        if t > m.at {
            let dt = (t - m.at).as_secs_f64();
            advance_mobility(&mut m.state, dt, &self.params, &mut m.rng);
            m.at = t;
        }
        m.state
    }

    pub fn position_at(&mut self, i: usize, t: SimTime) -> Position {
        self.state_at(i, t).position
    }
}
