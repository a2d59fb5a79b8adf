//! How often each node runs its detection scan.

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CadenceError {
    #[error("max tolerable drop fraction must be > 0, got {0}")]
    NonPositiveTolerance(f64),
    #[error("flow rate must be > 0, got {0}")]
    NonPositiveRate(f64),
    #[error("min period {min} exceeds max period {max}")]
    InvertedBounds { min: SimTime, max: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadenceInput {
    /// Largest fraction of a flow's packets the application can lose.
    pub max_drop_fraction: f64,
    /// Packets per second per flow.
    pub flow_rate: f64,
    /// Accounting window over which the tolerance applies.
    pub window: SimTime,
    pub min_period: SimTime,
    pub max_period: SimTime,
}

/// Period T such that a flow losing everything between two scans,
/// `rate * T` packets, stays within `d_max * rate * window`.
pub fn how_often_to_detect(c: &CadenceInput) -> Result<SimTime, CadenceError> {
    if c.max_drop_fraction.is_nan() || c.max_drop_fraction <= 0.0 {
        return Err(CadenceError::NonPositiveTolerance(c.max_drop_fraction));
    }
    if c.flow_rate.is_nan() || c.flow_rate <= 0.0 {
        return Err(CadenceError::NonPositiveRate(c.flow_rate));
    }
    if c.min_period > c.max_period {
        return Err(CadenceError::InvertedBounds {
            min: c.min_period,
            max: c.max_period,
        });
    }
    if c.max_drop_fraction >= 1.0 {
        return Ok(c.max_period);
    }
    let budget = c.max_drop_fraction * c.flow_rate * c.window.as_secs_f64();
    Ok(period_for_budget(budget, c.flow_rate).clamp(c.min_period, c.max_period))
}

/// Period for an absolute per-window packet budget.
pub fn period_for_budget(budget_packets: f64, flow_rate: f64) -> SimTime {
    SimTime::from_secs_f64(budget_packets / flow_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(d: f64) -> CadenceInput {
        CadenceInput {
            max_drop_fraction: d,
            flow_rate: 2.0,
            window: SimTime::from_secs(100),
            min_period: SimTime::from_secs(2),
            max_period: SimTime::from_secs(60),
        }
    }

    #[test]
    fn twenty_packet_budget_at_two_per_second() {
        assert_eq!(period_for_budget(20.0, 2.0), SimTime::from_secs(10));
        assert_eq!(how_often_to_detect(&input(0.1)), Ok(SimTime::from_secs(10)));
    }

    #[test]
    fn full_tolerance_relaxes_to_max() {
        assert_eq!(how_often_to_detect(&input(1.0)), Ok(SimTime::from_secs(60)));
    }

    #[test]
    fn clamped() {
        assert_eq!(
            how_often_to_detect(&input(0.001)),
            Ok(SimTime::from_secs(2))
        );
        assert_eq!(how_often_to_detect(&input(0.9)), Ok(SimTime::from_secs(60)));
    }

    #[test]
    fn rejects_non_positive_tolerance() {
        assert!(matches!(
            how_often_to_detect(&input(0.0)),
            Err(CadenceError::NonPositiveTolerance(_))
        ));
        assert!(how_often_to_detect(&input(-0.5)).is_err());
    }
}
