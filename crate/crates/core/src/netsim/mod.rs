//! Deterministic network emulation and the measurement harness.
//!
//! Runs a Leader, the relay and any number of Followers in one thread on a
//! virtual microsecond clock, moving datagrams over seeded [`Link`]s. Each
//! participant has its own skewed local clock, calibrated against the relay
//! before the session starts.

pub mod clock;
pub mod link;
pub mod report;
pub mod scenario;

use thiserror::Error;

pub use clock::{best_offset, calibrate_clock, Exchange};
pub use link::{emulate_link, Delivery, Link, LinkCounters, LinkProfile};
pub use report::{aggregate, read_csv, render_report, run_scenario, run_seeds, write_csv, MetricsReport};
pub use scenario::{run_once, world_objects, RunResult, Scenario, TrafficTotals};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsimError {
    #[error("invalid link profile: {0}")]
    InvalidProfile(String),
    #[error("invalid clock exchange (t3 < t0 or t2 < t1)")]
    InvalidExchange,
    #[error("room transfer needs at least one object")]
    ZeroObjects,
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("scenario timed out: {0}")]
    ScenarioTimeout(String),
    #[error("no reports")]
    EmptyReport,
    #[error("{0}")]
    Io(String),
}

/// Scales a transfer time to a 50-object room.
pub fn normalized_room_transfer(total_time_s: f64, total_objects: usize) -> Result<f64, NetsimError> {
    if total_objects == 0 {
        return Err(NetsimError::ZeroObjects);
    }
    Ok(total_time_s / total_objects as f64 * 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalized_room_transfer(1.92, 80).unwrap(), 1.2);
        assert_eq!(normalized_room_transfer(0.731, 50).unwrap(), 0.731);
        assert!((normalized_room_transfer(2.53, 90).unwrap() - 1.405_555).abs() < 1e-5);
        assert_eq!(normalized_room_transfer(1.0, 0), Err(NetsimError::ZeroObjects));
    }
}
