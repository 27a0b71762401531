//! Integer virtual time.
//!
//! One tick is one picosecond. At 365 cells/ms the cell slot is
//! 2,739,726.03 ps; rounding it to 2,739,726 ps makes a cell slot short by
//! about 1.1e-6 % of its true length, far below anything the experiments
//! can observe.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::Serialize;

pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_SEC: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * PS_PER_MS)
    }

    /// Fractional milliseconds, rounded to the nearest picosecond.
    pub fn from_millis_f64(ms: f64) -> Self {
        assert!(ms.is_finite() && ms >= 0.0, "invalid duration {ms} ms");
        SimTime((ms * PS_PER_MS as f64).round() as u64)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        assert!(s.is_finite() && s >= 0.0, "invalid duration {s} s");
        SimTime((s * PS_PER_SEC as f64).round() as u64)
    }

    /// Time to send one cell at `rate` cells/s, rounded to the nearest tick.
    pub fn cell_interval(rate: f64) -> Self {
        assert!(rate > 0.0, "rate must be positive, got {rate}");
        SimTime((PS_PER_SEC as f64 / rate).round() as u64)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / PS_PER_MS as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("SimTime overflow"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("SimTime underflow"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}ms", self.as_millis_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_slot_at_365_cells_per_ms() {
        assert_eq!(SimTime::cell_interval(365_000.0), SimTime(2_739_726));
    }

    #[test]
    fn millisecond_conversions() {
        assert_eq!(SimTime::from_millis_f64(0.01), SimTime(10_000_000));
        assert_eq!(SimTime::from_millis_f64(275.0), SimTime::from_millis(275));
        assert_eq!(SimTime::from_micros(500).as_millis_f64(), 0.5);
    }

    #[test]
    #[should_panic(expected = "underflow")]
    fn subtraction_underflow_panics() {
        let _ = SimTime(1) - SimTime(2);
    }
}
