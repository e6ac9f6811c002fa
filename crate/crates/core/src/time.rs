use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

const FS_PER_SECOND: f64 = 1e15;

/// Simulated time as an integer count of femtoseconds.
///
/// Pulse intervals such as 1 ns are exact in this unit, so a sender's clock
/// after `k` pulses is exactly `k` times the pulse length. Propagation delays
/// are rounded up to the next femtosecond, which keeps every arrival at or
/// after the ideal real-valued arrival time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_femtos(fs: u64) -> Self {
        SimTime(fs)
    }

    pub fn femtos(self) -> u64 {
        self.0
    }

    /// Nearest femtosecond; negative or non-finite input is clamped to zero.
    pub fn from_secs(seconds: f64) -> Self {
        if !(seconds > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((seconds * FS_PER_SECOND).round() as u64)
    }

    /// Smallest femtosecond count not below `seconds`.
    pub fn from_secs_ceil(seconds: f64) -> Self {
        if !(seconds > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((seconds * FS_PER_SECOND).ceil() as u64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / FS_PER_SECOND
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} s", self.as_secs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulses_accumulate_exactly() {
        let pulse = SimTime::from_secs(1e-9);
        assert_eq!(pulse.femtos(), 1_000_000);
        let mut t = SimTime::ZERO;
        for _ in 0..1000 {
            t += pulse;
        }
        assert_eq!(t, SimTime::from_secs(1e-6));
        assert_eq!(t.as_secs(), 1e-6);
    }

    #[test]
    fn ceil_never_undershoots() {
        let delay = 1.0 / 2.998e5;
        assert!(SimTime::from_secs_ceil(delay).as_secs() >= delay);
        assert_eq!(SimTime::from_secs(-1.0), SimTime::ZERO);
        assert_eq!(SimTime::from_secs(f64::NAN), SimTime::ZERO);
    }
}
