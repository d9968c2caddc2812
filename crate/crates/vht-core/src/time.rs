//! Reference ("true") simulation time.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

/// Longest supported scenario horizon, in seconds.
///
/// Capped so that the absolute resolution of an `f64` timestamp stays below
/// 2 ps over the whole run (the ulp of 1e4 is ~1.8e-12 s), more than four
/// orders of magnitude below the nanosecond-scale jitter being modeled.
pub const MAX_HORIZON_S: f64 = 1.0e4;

/// A point on the reference timeline, in seconds.
///
/// Always finite and non-negative, which makes the ordering total.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Wraps a raw number of seconds.
    ///
    /// # Panics
    /// Panics if `seconds` is negative, NaN or infinite; those values have no
    /// place on the reference timeline and failing early keeps the ordering
    /// total.
    pub fn new(seconds: f64) -> Self {
        assert!(
            seconds.is_finite() && seconds >= 0.0,
            "SimTime must be finite and non-negative, got {seconds}"
        );
        SimTime(seconds)
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        // Values are finite by construction.
        self.partial_cmp(other).expect("SimTime is always ordered")
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime::new(self.0 + rhs)
    }
}

impl Sub<SimTime> for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_total() {
        let a = SimTime::new(1.0);
        let b = SimTime::new(2.0);
        assert!(a < b);
        assert_eq!(a.max(b), b);
    }

    #[test]
    #[should_panic(expected = "non-negative")]
    fn negative_time_rejected() {
        SimTime::new(-1.0);
    }

    #[test]
    fn resolution_at_horizon_is_orders_below_jitter_scale() {
        let t = MAX_HORIZON_S;
        let ulp = f64::from_bits(t.to_bits() + 1) - t;
        assert!(ulp < 2e-12, "ulp at horizon is {ulp}");
        // at least four orders below a 60 ns jitter
        assert!(60e-9 / ulp > 1e4);
    }
}
